//! Experiment configuration, scenario presets and model construction.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use treeons_core::synth::{GaussMapParams, LorenzParams};
use treeons_core::{
    EnsembleConfig, EnsembleModel, FmpConfig, FmpModel, GeneratorKind, GeneratorSpec, LinearOns,
    SeparatorInit, SpConfig, SpModel,
};

use crate::error::{BenchError, Result};
use crate::model::AnyModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Linear,
    Sp,
    Fmp,
    Ensemble,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Linear,
        Algorithm::Sp,
        Algorithm::Fmp,
        Algorithm::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Linear => "linear",
            Algorithm::Sp => "sp",
            Algorithm::Fmp => "fmp",
            Algorithm::Ensemble => "ensemble",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Two-pass min-max over the whole stream (the default).
    Minmax,
    /// Running min-max without lookahead.
    OnlineMinmax,
    None,
}

impl std::str::FromStr for ScaleMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" | "offline_minmax" => Ok(ScaleMode::Minmax),
            "online_minmax" | "online" => Ok(ScaleMode::OnlineMinmax),
            "none" => Ok(ScaleMode::None),
            _ => Err(BenchError::Config(format!("unknown scale mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub lorenz: LorenzParams,
    #[serde(default)]
    pub gauss_map: GaussMapParams,
}

impl SyntheticSource {
    pub fn new(kind: GeneratorKind) -> Self {
        Self {
            kind,
            noise_variance: None,
            lorenz: LorenzParams::default(),
            gauss_map: GaussMapParams::default(),
        }
    }

    pub fn spec(&self, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            kind: self.kind,
            n,
            seed,
            noise_variance: self.noise_variance,
            lorenz: self.lorenz.clone(),
            gauss_map: self.gauss_map.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticSource),
}

/// Step sizes and regularizers of one algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub beta: f64,
    pub eta: f64,
    pub eta_combiner: f64,
    pub epsilon: f64,
    pub separator_epsilon: Option<f64>,
}

impl Rates {
    /// One learning rate used for every parameter group.
    pub fn uniform(rate: f64, epsilon: f64) -> Self {
        Self {
            beta: rate,
            eta: rate,
            eta_combiner: rate,
            epsilon,
            separator_epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Tree depth for `fmp` and `ensemble`.
    #[serde(default)]
    pub depth: Option<usize>,
    /// Separator count for `sp`.
    #[serde(default)]
    pub separators: Option<usize>,
    pub rates: Rates,
    #[serde(default)]
    pub freeze_separators: bool,
    #[serde(default)]
    pub init: SeparatorInit,
    pub data: DataSource,
    pub scale: ScaleMode,
    /// Sample count for generators; optional cap for CSV input.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Iterations (samples processed) after which boundaries and a checkpoint are written.
    #[serde(default)]
    pub snapshots: Vec<usize>,
    /// Skipped samples tolerated before the run aborts.
    #[serde(default = "default_skip_budget")]
    pub skip_budget: usize,
    /// Write every k-th step to the metrics CSV (the last step is always written).
    #[serde(default = "default_metrics_every")]
    pub metrics_every: usize,
}

fn default_skip_budget() -> usize {
    100
}

fn default_metrics_every() -> usize {
    1
}

/// Reference learning rate of a scenario, with the regularizers and
/// separator rate this harness uses alongside it.
pub fn preset_rates(kind: GeneratorKind, algorithm: Algorithm) -> Option<Rates> {
    use Algorithm::*;
    use GeneratorKind::*;
    let tuned = |beta: f64, eta: f64, epsilon: f64, sep: f64| Rates {
        beta,
        eta,
        eta_combiner: beta,
        epsilon,
        separator_epsilon: Some(sep),
    };
    Some(match (kind, algorithm) {
        (Matched, Fmp | Ensemble | Linear) => tuned(0.125, 0.02, 300.0, 30.0),
        (Matched, Sp) => tuned(0.0625, 0.02, 300.0, 30.0),
        (Mismatched, Fmp | Ensemble | Linear) => tuned(0.04, 0.023, 750.0, 65.0),
        (Mismatched, Sp) => tuned(0.025, 0.023, 750.0, 65.0),
        (GaussMap, Fmp | Ensemble | Linear) => Rates::uniform(0.004, 1000.0),
        (GaussMap, Sp) => Rates::uniform(0.04, 1000.0),
        (Lorenz, Fmp | Ensemble | Linear) => Rates::uniform(0.005, 1000.0),
        (Lorenz, Sp) => Rates::uniform(0.006, 1000.0),
        (Fig1, _) => return None,
    })
}

/// Default sample count of a scenario preset.
pub fn preset_len(kind: GeneratorKind) -> usize {
    match kind {
        GeneratorKind::Mismatched => 50_000,
        _ => 20_000,
    }
}

/// Scaling applied when none is requested: the piecewise-linear scenarios are
/// used as generated, chaotic signals and CSV files are min-max scaled.
pub fn default_scale(data: &DataSource) -> ScaleMode {
    match data {
        DataSource::Csv { .. } => ScaleMode::Minmax,
        DataSource::Synthetic(s) => match s.kind {
            GeneratorKind::GaussMap | GeneratorKind::Lorenz => ScaleMode::Minmax,
            _ => ScaleMode::None,
        },
    }
}

impl ExperimentConfig {
    /// Scenario preset: reference rates, depth 2 or two separators.
    pub fn preset(kind: GeneratorKind, algorithm: Algorithm) -> Result<Self> {
        let rates = preset_rates(kind, algorithm).ok_or_else(|| {
            BenchError::Config(format!("no preset rates for {} / {}", kind.name(), algorithm.name()))
        })?;
        let data = DataSource::Synthetic(SyntheticSource::new(kind));
        Ok(Self {
            algorithm,
            depth: matches!(algorithm, Algorithm::Fmp | Algorithm::Ensemble).then_some(2),
            separators: (algorithm == Algorithm::Sp).then_some(2),
            rates,
            freeze_separators: false,
            init: SeparatorInit::AxisAligned,
            scale: default_scale(&data),
            data,
            n: Some(preset_len(kind)),
            seed: 0,
            out: None,
            snapshots: Vec::new(),
            skip_budget: default_skip_budget(),
            metrics_every: default_metrics_every(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rates;
        let positive = [
            ("beta", r.beta),
            ("eta", r.eta),
            ("eta_combiner", r.eta_combiner),
            ("epsilon", r.epsilon),
        ];
        for (name, v) in positive.iter().copied().chain(r.separator_epsilon.map(|v| ("separator_epsilon", v))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BenchError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        match self.algorithm {
            Algorithm::Fmp | Algorithm::Ensemble if self.depth.is_none() => {
                return Err(BenchError::Config(format!("{} requires a depth", self.algorithm.name())))
            }
            Algorithm::Sp if self.separators.is_none() => {
                return Err(BenchError::Config("sp requires a separator count".into()))
            }
            _ => {}
        }
        if self.metrics_every == 0 {
            return Err(BenchError::Config("metrics_every must be at least 1".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            // An empty run never starts the generator; its other parameters still apply.
            let mut spec = self.generator_spec(s);
            spec.n = spec.n.max(1);
            spec.validate()?;
        }
        Ok(())
    }

    pub(crate) fn generator_spec(&self, s: &SyntheticSource) -> GeneratorSpec {
        s.spec(self.n.unwrap_or_else(|| preset_len(s.kind)), self.seed)
    }

    /// Builds a fresh model for `m` raw features.
    pub fn build_model(&self, m: usize) -> Result<AnyModel> {
        self.validate()?;
        let dim = m + 1;
        let r = &self.rates;
        let model = match self.algorithm {
            Algorithm::Linear => AnyModel::Linear(LinearOns::new(dim, r.beta, r.epsilon)?),
            Algorithm::Sp => {
                let mut c = SpConfig::new(self.separators.unwrap_or(0), r.beta, r.eta);
                c.epsilon = r.epsilon;
                c.separator_epsilon = r.separator_epsilon;
                c.freeze_separators = self.freeze_separators;
                c.init = self.init;
                AnyModel::Sp(SpModel::new(dim, &c)?)
            }
            Algorithm::Fmp => {
                let mut c = FmpConfig::new(self.depth.unwrap_or(0), r.beta, r.eta);
                c.epsilon = r.epsilon;
                c.separator_epsilon = r.separator_epsilon;
                c.freeze_separators = self.freeze_separators;
                c.init = self.init;
                AnyModel::Fmp(FmpModel::new(dim, &c)?)
            }
            Algorithm::Ensemble => {
                let mut c = EnsembleConfig::new(self.depth.unwrap_or(0), r.beta, r.eta, r.eta_combiner);
                c.epsilon = r.epsilon;
                c.separator_epsilon = r.separator_epsilon;
                c.freeze_separators = self.freeze_separators;
                c.init = self.init;
                AnyModel::Ensemble(EnsembleModel::new(dim, &c)?)
            }
        };
        Ok(model)
    }
}
