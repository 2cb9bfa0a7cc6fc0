use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;

/// Dropout rates: d1 after the embeddings, d2 on LSTM states, d3 before the
/// projection. Kept activations are scaled by `1/(1−p)` during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl DropoutSpec {
    pub fn standard() -> Self {
        DropoutSpec {
            d1: 0.75,
            d2: 0.5,
            d3: 0.75,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.d1, self.d2, self.d3].iter().all(|p| (0.0..1.0).contains(p))
    }
}

impl Default for DropoutSpec {
    fn default() -> Self {
        DropoutSpec::standard()
    }
}

/// Independent inverted-dropout mask of the given shape.
pub fn standard_mask(shape: &[usize], p: f64, rng: &mut dyn RngCore) -> Tensor {
    let mut t = Tensor::full(shape, 1.0);
    if p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        for v in t.data_mut() {
            *v = if rng.random::<f64>() < p { 0.0 } else { keep };
        }
    }
    t
}

/// One mask for a whole sequence, reused at every timestep.
pub fn variational_mask(width: usize, p: f64, rng: &mut dyn RngCore) -> Tensor {
    standard_mask(&[width], p, rng)
}
