//! News recommendation on a rotated ellipse.
//!
//! A user context is a point on the ellipse `(minor sin phi, major cos phi)`.
//! Article `a` sees that point rotated by its own angle `theta_a`, and its
//! expected reward depends only on the user's minor-axis coordinate:
//! `r_a = 1 - (x_u[0] - a / N + 0.5)^2` with `a` counted from 1.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::{median_bandwidth, Context, KernelRole, KernelSpec, TaskSimilarity};

use super::{Environment, RoundObservation};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticNewsConfig {
    pub n_arms: usize,
    pub major: f64,
    pub minor: f64,
    /// Article rotation angles, sorted, within `[0, pi/2]`.
    pub angles: Vec<f64>,
    /// Standard deviation of additive Gaussian reward noise; 0 is noiseless.
    pub noise_std: f64,
}

impl SyntheticNewsConfig {
    /// `n_arms` articles with angles evenly spaced on `[0, pi/2]`.
    pub fn new(n_arms: usize) -> Result<Self> {
        if n_arms < 2 {
            return Err(Error::config(format!("need at least 2 arms, got {n_arms}")));
        }
        let angles = (0..n_arms)
            .map(|a| FRAC_PI_2 * a as f64 / (n_arms - 1) as f64)
            .collect();
        let cfg = Self {
            n_arms,
            major: 1.0,
            minor: 0.5,
            angles,
            noise_std: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arms < 2 {
            return Err(Error::config(format!("need at least 2 arms, got {}", self.n_arms)));
        }
        if self.angles.len() != self.n_arms {
            return Err(Error::config(format!(
                "{} angles for {} arms",
                self.angles.len(),
                self.n_arms
            )));
        }
        if self.angles.windows(2).any(|w| w[0] > w[1])
            || self.angles.iter().any(|t| !(0.0..=FRAC_PI_2).contains(t))
        {
            return Err(Error::config("angles must be sorted within [0, pi/2]"));
        }
        // |x_u[0] - a/N + 0.5| <= 1 needs the minor semi-axis at most 0.5.
        if !(self.minor > 0.0 && self.minor <= 0.5) {
            return Err(Error::config(format!("minor semi-axis must lie in (0, 0.5], got {}", self.minor)));
        }
        if !(self.major.is_finite() && self.major > 0.0) {
            return Err(Error::config(format!("major semi-axis must be positive, got {}", self.major)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config(format!("noise std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }

    /// Gaussian kernel on article angles. The bandwidth defaults to the
    /// median heuristic over the angles.
    pub fn known_similarity(&self, bandwidth: Option<f64>) -> Result<TaskSimilarity> {
        let feats: Vec<Vec<f64>> = self.angles.iter().map(|&t| vec![t]).collect();
        let bw = match bandwidth {
            Some(b) => b,
            None => median_bandwidth(&feats).unwrap_or(1.0),
        };
        TaskSimilarity::from_arm_features(&KernelSpec::gaussian(bw, KernelRole::Task)?, &feats)
    }
}

/// Rotates a 2-vector counterclockwise by `theta`.
pub fn rotate(x: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Expected reward of the 0-based arm `arm` for a user whose minor-axis
/// coordinate is `u0`.
pub fn synth_reward(u0: f64, arm: usize, n_arms: usize) -> f64 {
    let g = u0 - (arm + 1) as f64 / n_arms as f64 + 0.5;
    1.0 - g * g
}

/// Draws one round: a user point on the ellipse boundary and its rotations.
pub fn synth_round<R: Rng + ?Sized>(config: &SyntheticNewsConfig, rng: &mut R) -> RoundObservation {
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let user = [config.minor * phi.sin(), config.major * phi.cos()];
    let mut contexts = Vec::with_capacity(config.n_arms);
    let mut expected = Vec::with_capacity(config.n_arms);
    for (a, &theta) in config.angles.iter().enumerate() {
        let x = rotate(user, theta);
        contexts.push(Context::new(x.to_vec()).expect("finite rotation"));
        let r = synth_reward(user[0], a, config.n_arms);
        assert!((0.0..=1.0).contains(&r), "expected reward {r} outside [0, 1]");
        expected.push(r);
    }
    let realized = if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).expect("validated std");
        expected.iter().map(|r| r + noise.sample(rng)).collect()
    } else {
        expected.clone()
    };
    RoundObservation {
        contexts,
        expected,
        realized,
    }
}

/// Unbounded stream of synthetic rounds.
#[derive(Clone, Debug)]
pub struct SyntheticNews {
    config: SyntheticNewsConfig,
    rng: ChaCha8Rng,
}

impl SyntheticNews {
    /// `stream` separates runs that share a seed.
    pub fn new(config: SyntheticNewsConfig, seed: u64, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self { config, rng })
    }

    pub fn config(&self) -> &SyntheticNewsConfig {
        &self.config
    }
}

impl Environment for SyntheticNews {
    fn n_arms(&self) -> usize {
        self.config.n_arms
    }

    fn next_round(&mut self) -> Result<Option<RoundObservation>> {
        Ok(Some(synth_round(&self.config, &mut self.rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reward_examples() {
        assert!((synth_reward(0.1, 2, 5) - 1.0).abs() < 1e-15);
        assert!(synth_reward(-0.5, 4, 5).abs() < 1e-15);
    }

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(rotate([0.3, -0.7], 0.0), [0.3, -0.7]);
    }

    #[test]
    fn default_angles_span_quarter_turn() {
        let c = SyntheticNewsConfig::new(5).unwrap();
        assert_eq!(c.angles[0], 0.0);
        assert!((c.angles[4] - FRAC_PI_2).abs() < 1e-15);
        assert!(SyntheticNewsConfig::new(1).is_err());
    }

    #[test]
    fn known_similarity_uses_median_angle_gap() {
        let c = SyntheticNewsConfig::new(5).unwrap();
        let ts = c.known_similarity(None).unwrap();
        // Median gap is pi/4, so sigma = pi/(4 sqrt 2) and adjacent arms get
        // exp(-(pi/8)^2 / (2 sigma^2)) = exp(-1/4).
        assert!((ts.entry(0, 1) - (-0.25f64).exp()).abs() < 1e-12);
        assert_eq!(ts.entry(2, 2), 1.0);
    }

    #[test]
    fn same_seed_same_stream() {
        let c = SyntheticNewsConfig::new(5).unwrap();
        let mut a = SyntheticNews::new(c.clone(), 7, 3).unwrap();
        let mut b = SyntheticNews::new(c.clone(), 7, 3).unwrap();
        let mut other = SyntheticNews::new(c, 7, 4).unwrap();
        let ra = a.next_round().unwrap().unwrap();
        assert_eq!(ra, b.next_round().unwrap().unwrap());
        assert_ne!(ra, other.next_round().unwrap().unwrap());
    }

    proptest! {
        #[test]
        fn rounds_are_well_formed(seed in any::<u64>(), n in 2usize..8) {
            let c = SyntheticNewsConfig::new(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = synth_round(&c, &mut rng);
            prop_assert_eq!(obs.n_arms(), n);
            let user = obs.contexts[0].as_slice();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (a, x) in obs.contexts.iter().enumerate() {
                prop_assert!((norm(x.as_slice()) - norm(user)).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&obs.expected[a]));
                prop_assert!((obs.expected[a] - synth_reward(user[0], a, n)).abs() < 1e-15);
            }
            prop_assert_eq!(&obs.expected, &obs.realized);
        }
    }
}
