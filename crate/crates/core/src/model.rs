use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Version tag written into every JSON checkpoint.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Outcome of one predict-then-update step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub prediction: f64,
    pub error: f64,
    /// The sample produced a non-finite error or gradient and left the model untouched.
    pub skipped: bool,
}

/// A sequential regressor over augmented feature vectors (trailing bias entry).
pub trait OnlineRegressor {
    /// Length of the augmented feature vectors the model accepts.
    fn dim(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Result<f64>;

    /// Predicts `x`, suffers `(y - prediction)^2` and updates every parameter.
    fn update(&mut self, x: &[f64], y: f64) -> Result<StepReport>;

    /// Features `phi` such that the prediction equals `<regressor_params(), phi>`
    /// under the current separators.
    fn gated_features(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// All regressor weight vectors, concatenated in region order.
    fn regressor_params(&self) -> Vec<f64>;

    /// Current separator normals keyed by separator label.
    fn separator_normals(&self) -> Vec<(String, Vec<f64>)>;
}

/// How separator normals are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparatorInit {
    /// Unit vector along one raw feature axis, zero bias.
    #[default]
    AxisAligned,
    /// Seeded random unit direction over the raw features, zero bias.
    RandomProjection { seed: u64 },
}

pub(crate) struct NormalFactory {
    init: SeparatorInit,
    rng: Option<StreamRng>,
    dim: usize,
}

impl NormalFactory {
    pub(crate) fn new(init: SeparatorInit, dim: usize) -> Self {
        let rng = match init {
            SeparatorInit::AxisAligned => None,
            SeparatorInit::RandomProjection { seed } => Some(StreamRng::new(seed)),
        };
        Self { init, rng, dim }
    }

    /// Normal for a separator whose axis-aligned default splits raw feature `axis mod m`.
    pub(crate) fn next(&mut self, axis: usize) -> Vec<f64> {
        let raw = self.dim.saturating_sub(1);
        let mut n = vec![0.0; self.dim];
        if raw == 0 {
            return n;
        }
        match (self.init, self.rng.as_mut()) {
            (SeparatorInit::RandomProjection { .. }, Some(rng)) => {
                let mut norm = 0.0;
                while norm < 1e-12 {
                    for v in n[..raw].iter_mut() {
                        *v = rng.standard_normal();
                    }
                    norm = n[..raw].iter().map(|v| v * v).sum::<f64>().sqrt();
                }
                for v in n[..raw].iter_mut() {
                    *v /= norm;
                }
            }
            _ => n[axis % raw] = 1.0,
        }
        n
    }
}

pub(crate) fn check_version(found: u32) -> Result<()> {
    if found == CHECKPOINT_VERSION {
        Ok(())
    } else {
        Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found,
        })
    }
}

pub(crate) fn validate_rate(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} must be positive and finite, got {v}"
        )))
    }
}
