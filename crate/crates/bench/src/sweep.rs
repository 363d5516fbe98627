//! Independent runs over algorithms and learning rates, executed in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, DataSource, ExperimentConfig, Rates};
use crate::error::Result;
use crate::runner::{prepare_data, run_stream, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub rates: Rates,
    pub final_nae: Option<f64>,
    pub final_window_mse: Option<f64>,
    /// Set when the run failed (for instance by exceeding the skip budget).
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub linear: f64,
    /// `(algorithm, best final error)` for every partitioned model swept.
    pub others: Vec<(Algorithm, f64)>,
    /// Every partitioned model's best error is at most the linear baseline's.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Best row per algorithm by final normalized accumulated error.
    pub best: Vec<SweepRow>,
    pub ordering: Option<OrderingCheck>,
}

/// One grid point: a learning rate shared by all parameter groups and a regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub rate: f64,
    pub epsilon: f64,
}

/// Runs `base` for every algorithm and grid point on the same prepared data.
pub fn sweep(base: &ExperimentConfig, algorithms: &[Algorithm], grid: &[GridPoint]) -> Result<SweepReport> {
    base.validate()?;
    let data = prepare_data(base, None)?;
    let jobs: Vec<(Algorithm, GridPoint)> = algorithms
        .iter()
        .flat_map(|a| grid.iter().map(move |g| (*a, *g)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|(algorithm, g)| {
            let mut cfg = base.clone();
            cfg.algorithm = *algorithm;
            cfg.rates = Rates::uniform(g.rate, g.epsilon);
            if *algorithm == Algorithm::Sp && cfg.separators.is_none() {
                cfg.separators = Some(2);
            }
            if matches!(algorithm, Algorithm::Fmp | Algorithm::Ensemble) && cfg.depth.is_none() {
                cfg.depth = Some(2);
            }
            let opts = RunOptions {
                snapshots: Vec::new(),
                skip_budget: cfg.skip_budget,
                oracle_ridge: None,
            };
            let outcome = cfg
                .build_model(data.feature_dim)
                .and_then(|mut m| run_stream(&mut m, data.samples.iter().cloned(), &opts));
            match outcome {
                Ok(out) => SweepRow {
                    algorithm: *algorithm,
                    rates: cfg.rates,
                    final_nae: out.metrics.final_nae(),
                    final_window_mse: out.metrics.final_window_mse,
                    failure: None,
                },
                Err(e) => SweepRow {
                    algorithm: *algorithm,
                    rates: cfg.rates,
                    final_nae: None,
                    final_window_mse: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best: Vec<SweepRow> = algorithms
        .iter()
        .filter_map(|a| {
            rows.iter()
                .filter(|r| r.algorithm == *a && r.final_nae.is_some_and(f64::is_finite))
                .min_by(|x, y| x.final_nae.unwrap().total_cmp(&y.final_nae.unwrap()))
                .cloned()
        })
        .collect();
    let ordering = ordering_check(&best);
    Ok(SweepReport { rows, best, ordering })
}

/// Partitioned models must not do worse than the linear baseline.
pub fn ordering_check(best: &[SweepRow]) -> Option<OrderingCheck> {
    let linear = best.iter().find(|r| r.algorithm == Algorithm::Linear)?.final_nae?;
    let others: Vec<(Algorithm, f64)> = best
        .iter()
        .filter(|r| r.algorithm != Algorithm::Linear)
        .filter_map(|r| Some((r.algorithm, r.final_nae?)))
        .collect();
    if others.is_empty() {
        return None;
    }
    let holds = others.iter().all(|(_, e)| *e <= linear);
    Some(OrderingCheck { linear, others, holds })
}

/// Whether the ordering claim applies: only user-supplied CSV data.
pub fn ordering_applies(base: &ExperimentConfig) -> bool {
    matches!(base.data, DataSource::Csv { .. })
}

pub fn write_sweep_csv(w: &mut impl std::io::Write, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "algorithm,rate,epsilon,final_nae,final_window_mse,failure")?;
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.algorithm.name(),
            r.rates.beta,
            r.rates.epsilon,
            num(r.final_nae),
            num(r.final_window_mse),
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}
