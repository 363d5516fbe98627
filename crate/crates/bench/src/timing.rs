//! Per-step wall time across model sizes.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use treeons_core::rng::StreamRng;
use treeons_core::{augment, GeneratorKind};

use crate::config::{Algorithm, ExperimentConfig, Rates};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCase {
    pub algorithm: Algorithm,
    /// Depth for tree models, separator count for `sp`, ignored for `linear`.
    pub size: usize,
    /// Raw feature dimension.
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    pub steps: usize,
    pub warmup: usize,
    /// Steps timed together; the per-step time of a batch is its mean.
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            steps: 4096,
            warmup: 256,
            batch: 16,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub case: ProfileCase,
    /// Median over batches of the per-step time, nanoseconds.
    pub median_ns: f64,
    /// `median_ns` over that of the previous row with the same algorithm and `m`.
    pub ratio: Option<f64>,
}

fn case_config(case: &ProfileCase) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::preset(GeneratorKind::Matched, case.algorithm)?;
    c.rates = Rates::uniform(0.5, 1.0);
    match case.algorithm {
        Algorithm::Sp => c.separators = Some(case.size),
        Algorithm::Fmp | Algorithm::Ensemble => c.depth = Some(case.size),
        Algorithm::Linear => {}
    }
    Ok(c)
}

struct CaseRun {
    model: crate::model::AnyModel,
    data: Vec<(Vec<f64>, f64)>,
    next: usize,
    per_step: Vec<f64>,
}

impl CaseRun {
    fn new(case: &ProfileCase, settings: &ProfileSettings) -> Result<Self> {
        let mut model = case_config(case)?.build_model(case.m)?;
        let mut rng = StreamRng::new(settings.seed);
        let data: Vec<(Vec<f64>, f64)> = (0..settings.warmup + settings.steps)
            .map(|_| {
                let raw: Vec<f64> = (0..case.m).map(|_| rng.standard_normal()).collect();
                let y = raw[0] * raw.get(1).copied().unwrap_or(1.0).signum() + 0.3 * rng.standard_normal();
                (augment(&raw).expect("finite"), y)
            })
            .collect();
        for (x, y) in &data[..settings.warmup] {
            model.regressor_mut().update(x, *y)?;
        }
        Ok(Self {
            model,
            next: settings.warmup,
            data,
            per_step: Vec::new(),
        })
    }

    fn timed_batch(&mut self, batch: usize) -> Result<()> {
        let end = (self.next + batch).min(self.data.len());
        let reg = self.model.regressor_mut();
        let start = Instant::now();
        for (x, y) in &self.data[self.next..end] {
            reg.update(x, *y)?;
        }
        let elapsed = start.elapsed().as_nanos() as f64;
        if end > self.next {
            self.per_step.push(elapsed / (end - self.next) as f64);
        }
        self.next = end;
        Ok(())
    }

    fn done(&self) -> bool {
        self.next >= self.data.len()
    }

    fn median(&mut self) -> f64 {
        self.per_step.sort_by(f64::total_cmp);
        self.per_step.get(self.per_step.len() / 2).copied().unwrap_or(f64::NAN)
    }
}

/// Median per-step update time of one case.
pub fn time_case(case: &ProfileCase, settings: &ProfileSettings) -> Result<f64> {
    Ok(timing_profile(std::slice::from_ref(case), settings)?[0].median_ns)
}

/// Times every case and fills the scaling ratios. Batches of all cases are
/// interleaved so slow drifts in machine load affect every case alike.
pub fn timing_profile(cases: &[ProfileCase], settings: &ProfileSettings) -> Result<Vec<ProfileRow>> {
    let mut runs = cases
        .iter()
        .map(|c| CaseRun::new(c, settings))
        .collect::<Result<Vec<_>>>()?;
    let batch = settings.batch.max(1);
    while runs.iter().any(|r| !r.done()) {
        for r in runs.iter_mut().filter(|r| !r.done()) {
            r.timed_batch(batch)?;
        }
    }
    let mut rows: Vec<ProfileRow> = Vec::with_capacity(cases.len());
    for (case, run) in cases.iter().zip(&mut runs) {
        let median_ns = run.median();
        let ratio = rows
            .iter()
            .rev()
            .find(|r| r.case.algorithm == case.algorithm && r.case.m == case.m)
            .map(|r| median_ns / r.median_ns);
        rows.push(ProfileRow {
            case: *case,
            median_ns,
            ratio,
        });
    }
    Ok(rows)
}

pub fn write_profile_csv(w: &mut impl std::io::Write, rows: &[ProfileRow]) -> std::io::Result<()> {
    writeln!(w, "algorithm,size,m,median_ns,ratio")?;
    for r in rows {
        let ratio = r.ratio.map(|v| format!("{v:.3}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.1},{ratio}",
            r.case.algorithm.name(),
            r.case.size,
            r.case.m,
            r.median_ns
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_chain_within_algorithm() {
        let cases = [
            ProfileCase { algorithm: Algorithm::Fmp, size: 1, m: 2 },
            ProfileCase { algorithm: Algorithm::Linear, size: 0, m: 2 },
            ProfileCase { algorithm: Algorithm::Fmp, size: 2, m: 2 },
        ];
        let settings = ProfileSettings { steps: 64, warmup: 8, batch: 8, seed: 1 };
        let rows = timing_profile(&cases, &settings).unwrap();
        assert!(rows[0].ratio.is_none() && rows[1].ratio.is_none());
        let r = rows[2].ratio.unwrap();
        assert!((r - rows[2].median_ns / rows[0].median_ns).abs() < 1e-12);
    }
}
