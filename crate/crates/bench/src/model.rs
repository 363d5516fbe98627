use treeons_core::{EnsembleModel, FmpModel, LinearOns, OnlineRegressor, SpModel};

use crate::error::{BenchError, Result};

/// Any of the harness's predictors.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyModel {
    Linear(LinearOns),
    Sp(SpModel),
    Fmp(FmpModel),
    Ensemble(EnsembleModel),
}

impl AnyModel {
    pub fn regressor(&self) -> &dyn OnlineRegressor {
        match self {
            AnyModel::Linear(m) => m,
            AnyModel::Sp(m) => m,
            AnyModel::Fmp(m) => m,
            AnyModel::Ensemble(m) => m,
        }
    }

    pub fn regressor_mut(&mut self) -> &mut dyn OnlineRegressor {
        match self {
            AnyModel::Linear(m) => m,
            AnyModel::Sp(m) => m,
            AnyModel::Fmp(m) => m,
            AnyModel::Ensemble(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Linear(_) => "linear",
            AnyModel::Sp(_) => "sp",
            AnyModel::Fmp(_) => "fmp",
            AnyModel::Ensemble(_) => "ensemble",
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyModel::Linear(m) => m.to_json(),
            AnyModel::Sp(m) => m.to_json(),
            AnyModel::Fmp(m) => m.to_json(),
            AnyModel::Ensemble(m) => m.to_json(),
        }
    }

    /// Restores a checkpoint written by [`to_json`](Self::to_json).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| BenchError::Data(format!("bad checkpoint: {e}")))?;
        let kind = value.get("kind").and_then(|k| k.as_str());
        Ok(match kind {
            Some("sp") => AnyModel::Sp(SpModel::from_json(text)?),
            Some("fmp") => AnyModel::Fmp(FmpModel::from_json(text)?),
            Some("ensemble") => AnyModel::Ensemble(EnsembleModel::from_json(text)?),
            _ => AnyModel::Linear(LinearOns::from_json(text)?),
        })
    }

    /// Whether the partition is fixed for the rest of the run.
    pub fn boundaries_frozen(&self) -> bool {
        match self {
            AnyModel::Linear(_) => true,
            AnyModel::Sp(m) => m.separators_frozen() || m.num_separators() == 0,
            AnyModel::Fmp(m) => m.separators_frozen(),
            AnyModel::Ensemble(m) => m.separators_frozen(),
        }
    }
}
