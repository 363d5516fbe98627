//! Strict predict-then-update streaming loop and experiment orchestration.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use treeons_core::{augment, Sample};

use crate::config::{DataSource, ExperimentConfig, ScaleMode};
use crate::data::load_csv;
use crate::error::{BenchError, Result};
use crate::model::AnyModel;
use crate::oracle::HindsightOracle;
use crate::output;
use crate::scale::{minmax_scale, MinMaxScaler, OnlineMinMax};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Sample counts after which boundaries and a checkpoint are recorded.
    pub snapshots: Vec<usize>,
    pub skip_budget: usize,
    /// Track regret against the hindsight comparator with this ridge.
    pub oracle_ridge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySnapshot {
    pub iteration: usize,
    pub separator: String,
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// Squared error of each step.
    pub e2: Vec<f64>,
    /// `(1/t) sum_{s<=t} e_s^2`
    pub nae: Vec<f64>,
    pub final_window_mse: Option<f64>,
    pub skipped: usize,
    pub step_nanos: Vec<u64>,
    pub cum_regret: Option<Vec<f64>>,
    /// Largest `|2 e z|` seen, the gradient bound of the comparator class.
    pub max_grad_norm: Option<f64>,
    /// Parameter count of the comparator class.
    pub comparator_dim: Option<usize>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.e2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e2.is_empty()
    }

    pub fn final_nae(&self) -> Option<f64> {
        self.nae.last().copied()
    }

    pub fn median_step_nanos(&self) -> Option<u64> {
        median(&self.step_nanos)
    }
}

pub fn median(values: &[u64]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    Some(*v.select_nth_unstable(mid).1)
}

/// Mean of the last 10% of `e2` (at least one step).
pub fn final_window_mse(e2: &[f64]) -> Option<f64> {
    if e2.is_empty() {
        return None;
    }
    let w = e2.len().div_ceil(10);
    let tail = &e2[e2.len() - w..];
    Some(tail.iter().sum::<f64>() / w as f64)
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub snapshots: Vec<BoundarySnapshot>,
    /// `(iteration, checkpoint JSON)`
    pub checkpoints: Vec<(usize, String)>,
}

/// Feeds raw samples through `model` one at a time: predict, suffer, update.
pub fn run_stream(
    model: &mut AnyModel,
    samples: impl IntoIterator<Item = Sample>,
    opts: &RunOptions,
) -> Result<RunOutput> {
    let mut oracle = match opts.oracle_ridge {
        Some(ridge) => {
            if !model.boundaries_frozen() {
                return Err(BenchError::Config(
                    "the hindsight comparator requires frozen boundaries".into(),
                ));
            }
            let dim = model.regressor().regressor_params().len();
            Some(HindsightOracle::new(dim, ridge))
        }
        None => None,
    };
    let mut snaps: Vec<usize> = opts.snapshots.clone();
    snaps.sort_unstable();
    snaps.dedup();
    let mut next_snap = snaps.iter().peekable();

    let mut out = RunOutput::default();
    let m = &mut out.metrics;
    let mut regret = oracle.as_ref().map(|_| Vec::new());
    let mut max_grad: f64 = 0.0;
    let (mut acc, mut online_loss) = (0.0, 0.0);
    for (i, s) in samples.into_iter().enumerate() {
        let t = i + 1;
        let x = augment(&s.x).map_err(|e| BenchError::Data(format!("sample {t}: {e}")))?;
        if x.len() != model.regressor().dim() {
            return Err(BenchError::Data(format!(
                "sample {t}: expected {} features, found {}",
                model.regressor().dim() - 1,
                s.x.len()
            )));
        }
        let z = match &oracle {
            Some(_) => Some(model.regressor().gated_features(&x)?),
            None => None,
        };
        let start = Instant::now();
        let report = model.regressor_mut().update(&x, s.y)?;
        m.step_nanos.push(start.elapsed().as_nanos() as u64);
        let e2 = report.error * report.error;
        if report.skipped {
            m.skipped += 1;
            if m.skipped > opts.skip_budget {
                return Err(BenchError::Numeric(format!(
                    "sample {t}: {} skipped updates exceed the budget of {} \
                     (prediction {:e}, target {:e}, model {})",
                    m.skipped,
                    opts.skip_budget,
                    report.prediction,
                    s.y,
                    model.kind()
                )));
            }
        }
        if e2.is_finite() {
            acc += e2;
        }
        m.e2.push(e2);
        m.nae.push(acc / t as f64);
        if let (Some(o), Some(z), Some(curve)) = (oracle.as_mut(), z, regret.as_mut()) {
            o.push(&z, s.y)?;
            online_loss += e2;
            curve.push(online_loss - o.fit().loss);
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            max_grad = max_grad.max(2.0 * report.error.abs() * norm);
        }
        while next_snap.peek().is_some_and(|&&k| k == t) {
            next_snap.next();
            for (label, normal) in model.regressor().separator_normals() {
                out.snapshots.push(BoundarySnapshot {
                    iteration: t,
                    separator: label,
                    normal,
                });
            }
            out.checkpoints.push((t, model.to_json()));
        }
    }
    m.final_window_mse = final_window_mse(&m.e2);
    if let Some(o) = &oracle {
        m.comparator_dim = Some(o.fit().weights.len());
        m.max_grad_norm = Some(max_grad);
    }
    m.cum_regret = regret;
    Ok(out)
}

/// Samples of the configured source after scaling.
pub struct PreparedData {
    pub samples: Vec<Sample>,
    pub feature_dim: usize,
    pub scaler: Option<MinMaxScaler>,
}

pub fn prepare_data(config: &ExperimentConfig, base: Option<&Path>) -> Result<PreparedData> {
    let raw = match &config.data {
        DataSource::Csv { path } => {
            let full = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            let mut d = load_csv(full)?.samples;
            if let Some(n) = config.n {
                d.truncate(n);
            }
            d
        }
        DataSource::Synthetic(_) if config.n == Some(0) => Vec::new(),
        DataSource::Synthetic(s) => config.generator_spec(s).generate()?,
    };
    let feature_dim = match (&config.data, raw.first()) {
        (_, Some(s)) => s.x.len(),
        (DataSource::Synthetic(s), None) => s.kind.feature_dim(),
        (DataSource::Csv { .. }, None) => 0,
    };
    let (samples, scaler) = match config.scale {
        ScaleMode::None => (raw, None),
        ScaleMode::Minmax => {
            let (s, sc) = minmax_scale(&raw);
            (s, Some(sc))
        }
        ScaleMode::OnlineMinmax => {
            let mut o = OnlineMinMax::new();
            (raw.iter().map(|s| o.next(s)).collect(), None)
        }
    };
    Ok(PreparedData {
        samples,
        feature_dim,
        scaler,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub output: RunOutput,
    pub model: AnyModel,
    pub scaler: Option<MinMaxScaler>,
    pub wall_seconds: f64,
}

/// Loads data, builds the model, streams, and writes artifacts when
/// `config.out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, None)
}

pub fn run_experiment_with(config: &ExperimentConfig, oracle_ridge: Option<f64>) -> Result<ExperimentResult> {
    config.validate()?;
    let data = prepare_data(config, None)?;
    let mut model = config.build_model(data.feature_dim)?;
    let opts = RunOptions {
        snapshots: config.snapshots.clone(),
        skip_budget: config.skip_budget,
        oracle_ridge,
    };
    let start = Instant::now();
    let output = run_stream(&mut model, data.samples, &opts)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let result = ExperimentResult {
        output,
        model,
        scaler: data.scaler,
        wall_seconds,
    };
    if let Some(dir) = &config.out {
        output::write_all(dir, config, &result)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use treeons_core::rng::StreamRng;
    use treeons_core::LinearOns;

    fn line(n: usize, seed: u64) -> Vec<Sample> {
        let mut r = StreamRng::new(seed);
        (0..n)
            .map(|_| {
                let x = vec![r.standard_normal(), r.standard_normal()];
                let y = 0.8 * x[0] - 1.5 * x[1] + 0.3;
                Sample { x, y }
            })
            .collect()
    }

    fn linear() -> AnyModel {
        AnyModel::Linear(LinearOns::new(3, 0.5, 0.1).unwrap())
    }

    #[test]
    fn empty_stream_gives_empty_metrics() {
        let out = run_stream(&mut linear(), Vec::new(), &RunOptions::default()).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.metrics.final_window_mse, None);
    }

    #[test]
    fn linear_baseline_converges_on_noiseless_data() {
        let out = run_stream(&mut linear(), line(5000, 1), &RunOptions::default()).unwrap();
        assert!(out.metrics.final_window_mse.unwrap() < 1e-6);
    }

    #[test]
    fn nae_matches_offline_recomputation() {
        let out = run_stream(&mut linear(), line(3000, 2), &RunOptions::default()).unwrap();
        let mut acc = 0.0;
        for (t, (e2, nae)) in out.metrics.e2.iter().zip(&out.metrics.nae).enumerate() {
            acc += e2;
            assert!((acc / (t + 1) as f64 - nae).abs() < 1e-12);
            assert!(*nae >= 0.0);
        }
    }

    #[test]
    fn final_window_is_last_tenth() {
        let e2: Vec<f64> = (0..100).map(|i| if i < 90 { 5.0 } else { 1.0 }).collect();
        assert_eq!(final_window_mse(&e2), Some(1.0));
        assert_eq!(final_window_mse(&[3.0]), Some(3.0));
    }

    #[test]
    fn snapshots_and_checkpoints_land_on_requested_iterations() {
        let cfg = ExperimentConfig::preset(treeons_core::GeneratorKind::Matched, crate::Algorithm::Fmp).unwrap();
        let mut model = cfg.build_model(2).unwrap();
        let opts = RunOptions {
            snapshots: vec![10, 3, 10],
            skip_budget: 0,
            oracle_ridge: None,
        };
        let out = run_stream(&mut model, line(20, 3), &opts).unwrap();
        let its: Vec<usize> = out.checkpoints.iter().map(|c| c.0).collect();
        assert_eq!(its, vec![3, 10]);
        assert_eq!(out.snapshots.len(), 2 * 3);
        assert_eq!(out.snapshots[0].separator, "ε");
    }

    #[test]
    fn skip_budget_aborts_with_numeric_error() {
        let mut data = line(10, 4);
        data[5].y = f64::INFINITY;
        data[6].y = f64::NAN;
        let opts = RunOptions {
            skip_budget: 1,
            ..RunOptions::default()
        };
        let err = run_stream(&mut linear(), data.clone(), &opts).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let opts = RunOptions {
            skip_budget: 2,
            ..RunOptions::default()
        };
        let out = run_stream(&mut linear(), data, &opts).unwrap();
        assert_eq!(out.metrics.skipped, 2);
        assert!(out.metrics.nae.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn regret_needs_frozen_boundaries() {
        let cfg = ExperimentConfig::preset(treeons_core::GeneratorKind::Matched, crate::Algorithm::Fmp).unwrap();
        let mut model = cfg.build_model(2).unwrap();
        let opts = RunOptions {
            oracle_ridge: Some(0.1),
            ..RunOptions::default()
        };
        assert_eq!(run_stream(&mut model, line(5, 5), &opts).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn regret_equals_online_minus_oracle_loss() {
        let data = line(500, 6);
        let opts = RunOptions {
            oracle_ridge: Some(0.1),
            ..RunOptions::default()
        };
        let out = run_stream(&mut linear(), data.clone(), &opts).unwrap();
        let curve = out.metrics.cum_regret.unwrap();
        let online: f64 = out.metrics.e2.iter().sum();
        let z: Vec<Vec<f64>> = data.iter().map(|s| augment(&s.x).unwrap()).collect();
        let fit = crate::oracle::hindsight_oracle(z.iter().map(|v| &v[..]).zip(data.iter().map(|s| s.y)), 3, 0.1).unwrap();
        assert!((curve.last().unwrap() - (online - fit.loss)).abs() < 1e-9);
    }
}
