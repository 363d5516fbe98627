//! Single-region ONS linear regressor, the baseline every partitioned model reduces to.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::model::{check_version, validate_rate, OnlineRegressor, StepReport, CHECKPOINT_VERSION};
use crate::second_order::{dot, regressor_coefficient, OnsState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearOns {
    version: u32,
    weights: OnsState,
    #[serde(skip)]
    grad: Vec<f64>,
}

impl LinearOns {
    /// `dim` is the augmented dimension `m + 1`.
    pub fn new(dim: usize, beta: f64, epsilon: f64) -> Result<Self> {
        validate_rate("beta", beta)?;
        Ok(Self {
            version: CHECKPOINT_VERSION,
            weights: OnsState::new(dim, beta, epsilon)?,
            grad: vec![0.0; dim],
        })
    }

    pub fn weights(&self) -> &OnsState {
        &self.weights
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("linear model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(s)
            .map_err(|e| crate::Error::InvalidConfig(format!("bad checkpoint: {e}")))?;
        check_version(m.version)?;
        m.grad = vec![0.0; m.weights.dim()];
        Ok(m)
    }
}

impl OnlineRegressor for LinearOns {
    fn dim(&self) -> usize {
        self.weights.dim()
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(dot(self.weights.param(), x))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<StepReport> {
        let prediction = self.predict(x)?;
        let error = y - prediction;
        let coef = regressor_coefficient(error, 1.0);
        if !coef.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Ok(StepReport {
                prediction,
                error,
                skipped: true,
            });
        }
        self.grad.resize(x.len(), 0.0);
        self.weights.step_scaled(coef, x, &mut self.grad);
        Ok(StepReport {
            prediction,
            error,
            skipped: false,
        })
    }

    fn gated_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.to_vec())
    }

    fn regressor_params(&self) -> Vec<f64> {
        self.weights.param().to_vec()
    }

    fn separator_normals(&self) -> Vec<(String, Vec<f64>)> {
        Vec::new()
    }
}
