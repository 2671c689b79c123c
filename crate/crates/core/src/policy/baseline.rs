use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::Context;
use crate::regressor::argmax_lowest;

use super::{require_contexts, Decision, Policy};

/// Plays the arm with the highest expected reward. Needs the oracle.
#[derive(Debug, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        let expected = oracle.ok_or_else(|| Error::Runtime("oracle policy needs expected rewards".into()))?;
        if expected.len() != contexts.len() {
            return Err(Error::Runtime(format!(
                "{} expected rewards for {} arms",
                expected.len(),
                contexts.len()
            )));
        }
        let arm = argmax_lowest(expected.iter().copied()).expect("non-empty");
        Ok(Decision {
            arm,
            indices: Vec::new(),
            chosen: None,
        })
    }

    fn observe(&mut self, _round: usize, _arm: usize, _reward: f64) -> Result<()> {
        Ok(())
    }

    fn uses_oracle(&self) -> bool {
        true
    }
}

/// Uniformly random arm from its own seeded stream.
#[derive(Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    /// `stream` separates runs that share a seed.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        Ok(Decision {
            arm: self.rng.random_range(0..contexts.len()),
            indices: Vec::new(),
            chosen: None,
        })
    }

    fn observe(&mut self, _round: usize, _arm: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// Always plays the same arm (0-based internally, `fixed:<a>` is 1-based).
#[derive(Debug)]
pub struct FixedArm {
    arm: usize,
    name: String,
}

impl FixedArm {
    pub fn new(arm: usize) -> Self {
        Self {
            arm,
            name: format!("fixed:{}", arm + 1),
        }
    }

    pub fn arm(&self) -> usize {
        self.arm
    }
}

impl Policy for FixedArm {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _round: usize, contexts: &[Context], _oracle: Option<&[f64]>) -> Result<Decision> {
        require_contexts(contexts)?;
        if self.arm >= contexts.len() {
            return Err(Error::Index {
                index: self.arm,
                len: contexts.len(),
            });
        }
        Ok(Decision {
            arm: self.arm,
            indices: Vec::new(),
            chosen: None,
        })
    }

    fn observe(&mut self, _round: usize, _arm: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}
