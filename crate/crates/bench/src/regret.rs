//! Logarithmic regret check against `5 (G A + 1/alpha) m log n`.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Theory constants of the logarithmic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretOracleConfig {
    /// Bound `A` on `|w - w*|`.
    pub diameter: f64,
    /// Bound `G` on gradient norms.
    pub grad_bound: f64,
    /// Exp-concavity constant of the loss.
    pub alpha: f64,
}

impl RegretOracleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("diameter", self.diameter),
            ("gradient bound", self.grad_bound),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BenchError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `5 (G A + 1/alpha) m`.
    pub fn coefficient(&self, m: usize) -> f64 {
        5.0 * (self.grad_bound * self.diameter + 1.0 / self.alpha) * m as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub n: usize,
    pub regret: f64,
    /// `regret / log(max(n, 2))`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub checkpoints: Vec<RegretPoint>,
    /// Checkpoints spanning `[n/10, n]`.
    pub last_decade: Vec<RegretPoint>,
    pub max_ratio: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub non_increasing_last_decade: bool,
    /// Fewer than two samples: the ratio curve carries no information.
    pub degenerate: bool,
}

fn log_guard(n: usize) -> f64 {
    (n.max(2) as f64).ln()
}

fn point(curve: &[f64], n: usize) -> RegretPoint {
    let regret = curve[n - 1];
    RegretPoint {
        n,
        regret,
        ratio: regret / log_guard(n),
    }
}

/// Geometrically spaced sample counts in `[lo, hi]`, deduplicated.
fn geometric(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo.max(1)) as f64, hi as f64);
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let f = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            (a * (b / a).powf(f)).round() as usize
        })
        .map(|n| n.clamp(lo.max(1), hi))
        .collect();
    out.dedup();
    out
}

/// `curve[t]` is the cumulative regret after `t + 1` samples.
pub fn regret_check(curve: &[f64], cfg: &RegretOracleConfig, m: usize) -> RegretReport {
    let n = curve.len();
    let bound = cfg.coefficient(m);
    if n < 2 {
        let checkpoints: Vec<RegretPoint> = (1..=n).map(|k| point(curve, k)).collect();
        let max_ratio = checkpoints.iter().map(|p| p.ratio).fold(0.0, f64::max);
        return RegretReport {
            last_decade: checkpoints.clone(),
            checkpoints,
            max_ratio,
            bound,
            within_bound: max_ratio <= bound,
            non_increasing_last_decade: true,
            degenerate: true,
        };
    }
    let checkpoints: Vec<RegretPoint> = geometric(2, n, 25).into_iter().map(|k| point(curve, k)).collect();
    let last_decade: Vec<RegretPoint> =
        geometric((n / 10).max(2), n, 10).into_iter().map(|k| point(curve, k)).collect();
    let max_ratio = checkpoints
        .iter()
        .chain(&last_decade)
        .map(|p| p.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let non_increasing = last_decade.windows(2).all(|w| w[1].ratio <= w[0].ratio);
    RegretReport {
        checkpoints,
        last_decade,
        max_ratio,
        bound,
        within_bound: max_ratio <= bound,
        non_increasing_last_decade: non_increasing,
        degenerate: false,
    }
}
