use crate::error::{Error, Result};
use crate::kernel::{AugmentedContext, Context};

/// One played round.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// 1-based round index.
    pub round: usize,
    /// Zero-based arm index.
    pub arm: usize,
    pub context: AugmentedContext,
    pub reward: f64,
}

/// Ordered log of played rounds with per-arm pull counts.
#[derive(Clone, Debug)]
pub struct History {
    n_arms: usize,
    records: Vec<Observation>,
    pull_counts: Vec<usize>,
}

impl History {
    pub fn new(n_arms: usize) -> Self {
        Self {
            n_arms,
            records: Vec::new(),
            pull_counts: vec![0; n_arms],
        }
    }

    pub fn push(
        &mut self,
        round: usize,
        arm: usize,
        context: AugmentedContext,
        reward: f64,
    ) -> Result<()> {
        if arm >= self.n_arms {
            return Err(Error::Index {
                index: arm,
                len: self.n_arms,
            });
        }
        if !reward.is_finite() {
            return Err(Error::Validation(format!("reward {reward} is not finite")));
        }
        self.records.push(Observation {
            round,
            arm,
            context,
            reward,
        });
        self.pull_counts[arm] += 1;
        Ok(())
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn pull_counts(&self) -> &[usize] {
        &self.pull_counts
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn points(&self) -> Vec<AugmentedContext> {
        self.records.iter().map(|r| r.context.clone()).collect()
    }

    /// Contexts observed on rounds where `arm` was played.
    pub fn contexts_of(&self, arm: usize) -> impl Iterator<Item = &Context> + '_ {
        self.records
            .iter()
            .filter(move |r| r.arm == arm)
            .map(|r| &r.context.x)
    }

    /// Whether every reward lies in `[0, 1]`.
    pub fn rewards_in_unit_interval(&self) -> bool {
        self.records.iter().all(|r| (0.0..=1.0).contains(&r.reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ArmDescriptor;

    #[test]
    fn counts_sum_to_rounds() {
        let mut h = History::new(3);
        for t in 0..7 {
            let arm = t % 3;
            let x = AugmentedContext::new(ArmDescriptor::Arm(arm), Context::new(vec![t as f64]).unwrap());
            h.push(t + 1, arm, x, 0.5).unwrap();
        }
        assert_eq!(h.pull_counts().iter().sum::<usize>(), h.len());
        assert_eq!(h.pull_counts(), &[3, 2, 2]);
        assert_eq!(h.contexts_of(1).count(), 2);
    }

    #[test]
    fn rejects_bad_arm_and_reward() {
        let mut h = History::new(2);
        let x = AugmentedContext::new(ArmDescriptor::Arm(0), Context::new(vec![0.0]).unwrap());
        assert!(h.push(1, 2, x.clone(), 0.0).is_err());
        assert!(h.push(1, 0, x, f64::NAN).is_err());
        assert!(h.is_empty());
    }
}
