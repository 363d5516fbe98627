//! Result files: metrics CSV, JSON summary, checkpoints, boundary snapshots.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::runner::{BoundarySnapshot, ExperimentResult, RunMetrics};
use crate::scale::MinMaxScaler;

/// `treeons <version> (<git revision>)`
pub fn version_stamp() -> String {
    format!(
        "treeons {} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("TREEONS_GIT_REV")
    )
}

/// Metrics CSV (`step,e2,nae[,cum_regret]`), every `every`-th step plus the last.
/// Contains no timing, so identical runs give identical bytes.
pub fn write_metrics_csv(w: &mut impl Write, m: &RunMetrics, every: usize) -> std::io::Result<()> {
    let regret = m.cum_regret.as_deref();
    match regret {
        Some(_) => writeln!(w, "step,e2,nae,cum_regret")?,
        None => writeln!(w, "step,e2,nae")?,
    }
    let n = m.len();
    for i in 0..n {
        let step = i + 1;
        if step % every != 0 && step != n {
            continue;
        }
        match regret {
            Some(r) => writeln!(w, "{step},{},{},{}", m.e2[i], m.nae[i], r[i])?,
            None => writeln!(w, "{step},{},{}", m.e2[i], m.nae[i])?,
        }
    }
    Ok(())
}

pub fn write_snapshots_csv(w: &mut impl Write, snaps: &[BoundarySnapshot]) -> std::io::Result<()> {
    let width = snaps.first().map_or(0, |s| s.normal.len());
    let mut header = String::from("iteration,separator");
    for j in 1..width {
        header.push_str(&format!(",n{j}"));
    }
    if width > 0 {
        header.push_str(",bias");
    }
    writeln!(w, "{header}")?;
    for s in snaps {
        let label = if s.separator == "ε" { "root" } else { &s.separator };
        write!(w, "{},{label}", s.iteration)?;
        for v in &s.normal {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub version: String,
    pub rng: &'static str,
    pub model: &'static str,
    pub config: &'a ExperimentConfig,
    pub samples: usize,
    pub skipped: usize,
    pub final_window_mse: Option<f64>,
    pub final_nae: Option<f64>,
    pub scaling: Option<&'a MinMaxScaler>,
    pub median_step_ns: Option<u64>,
    pub wall_seconds: f64,
}

pub fn summary<'a>(config: &'a ExperimentConfig, r: &'a ExperimentResult) -> Summary<'a> {
    let m = &r.output.metrics;
    Summary {
        version: version_stamp(),
        rng: treeons_core::rng::RNG_NAME,
        model: r.model.kind(),
        config,
        samples: m.len(),
        skipped: m.skipped,
        final_window_mse: m.final_window_mse,
        final_nae: m.final_nae(),
        scaling: r.scaler.as_ref(),
        median_step_ns: m.median_step_nanos(),
        wall_seconds: r.wall_seconds,
    }
}

/// Writes `metrics.csv`, `summary.json`, `model.json`, `checkpoint_<t>.json`
/// and `boundaries.csv` into `dir`.
pub fn write_all(dir: &Path, config: &ExperimentConfig, r: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut metrics = std::io::BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(&mut metrics, &r.output.metrics, config.metrics_every)?;
    metrics.flush()?;
    let text = serde_json::to_string_pretty(&summary(config, r)).expect("summary serializes");
    fs::write(dir.join("summary.json"), text + "\n")?;
    fs::write(dir.join("model.json"), r.model.to_json())?;
    for (t, json) in &r.output.checkpoints {
        fs::write(dir.join(format!("checkpoint_{t}.json")), json)?;
    }
    if !r.output.snapshots.is_empty() {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("boundaries.csv"))?);
        write_snapshots_csv(&mut f, &r.output.snapshots)?;
        f.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimated_metrics_keep_last_row() {
        let m = RunMetrics {
            e2: vec![1.0, 2.0, 3.0],
            nae: vec![1.0, 1.5, 2.0],
            ..RunMetrics::default()
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &m, 2).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,e2,nae\n2,2,1.5\n3,3,2\n");
    }

    #[test]
    fn snapshot_rows() {
        let s = vec![BoundarySnapshot {
            iteration: 5,
            separator: "ε".into(),
            normal: vec![1.0, 0.5, -0.25],
        }];
        let mut buf = Vec::new();
        write_snapshots_csv(&mut buf, &s).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,separator,n1,n2,bias\n5,root,1,0.5,-0.25\n"
        );
    }
}
