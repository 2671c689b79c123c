use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::Context;

use super::{Environment, MulticlassDataset, RoundObservation};

/// Round for the `index`-th row of the test split: every arm sees the row's
/// features, and only the true class pays 1.
pub fn multiclass_round(ds: &MulticlassDataset, index: usize) -> Result<RoundObservation> {
    let row = *ds.test.get(index).ok_or(Error::Index {
        index,
        len: ds.test.len(),
    })?;
    let x = Context::new(ds.features[row].clone())?;
    let expected: Vec<f64> = (0..ds.n_classes)
        .map(|a| if a == ds.labels[row] { 1.0 } else { 0.0 })
        .collect();
    Ok(RoundObservation {
        contexts: vec![x; ds.n_classes],
        realized: expected.clone(),
        expected,
    })
}

/// Streams the test split once in a seeded random order.
#[derive(Clone, Debug)]
pub struct MulticlassEnv {
    dataset: Arc<MulticlassDataset>,
    order: Vec<usize>,
    pos: usize,
}

impl MulticlassEnv {
    /// `stream` separates runs that share a seed.
    pub fn new(dataset: Arc<MulticlassDataset>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..dataset.test.len()).collect();
        order.shuffle(&mut rng);
        Self {
            dataset,
            order,
            pos: 0,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Environment for MulticlassEnv {
    fn n_arms(&self) -> usize {
        self.dataset.n_classes
    }

    fn next_round(&mut self) -> Result<Option<RoundObservation>> {
        let Some(&i) = self.order.get(self.pos) else {
            return Ok(None);
        };
        self.pos += 1;
        multiclass_round(&self.dataset, i).map(Some)
    }
}
