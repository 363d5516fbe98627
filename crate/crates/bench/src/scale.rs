//! Per-column affine scaling to `[-1, 1]`.

use serde::{Deserialize, Serialize};
use treeons_core::Sample;

/// Column ranges over features followed by the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits over the full sample set (offline, two-pass).
    pub fn fit(samples: &[Sample]) -> Self {
        let width = samples.first().map_or(0, |s| s.x.len() + 1);
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for s in samples {
            for (j, v) in s.x.iter().chain(std::iter::once(&s.y)).enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Self { min, max }
    }

    #[inline]
    pub fn forward(&self, col: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[col], self.max[col]);
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    /// Inverse of [`forward`](Self::forward); constant columns map back to their value.
    #[inline]
    pub fn inverse(&self, col: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[col], self.max[col]);
        if hi > lo {
            lo + (v + 1.0) * (hi - lo) / 2.0
        } else {
            lo
        }
    }

    pub fn target_col(&self) -> usize {
        self.min.len() - 1
    }

    pub fn transform(&self, s: &Sample) -> Sample {
        Sample {
            x: s.x.iter().enumerate().map(|(j, v)| self.forward(j, *v)).collect(),
            y: self.forward(self.target_col(), s.y),
        }
    }

    pub fn inverse_transform(&self, s: &Sample) -> Sample {
        Sample {
            x: s.x.iter().enumerate().map(|(j, v)| self.inverse(j, *v)).collect(),
            y: self.inverse(self.target_col(), s.y),
        }
    }
}

/// Fits a scaler over `samples` and returns the scaled copy with it.
pub fn minmax_scale(samples: &[Sample]) -> (Vec<Sample>, MinMaxScaler) {
    let scaler = MinMaxScaler::fit(samples);
    (samples.iter().map(|s| scaler.transform(s)).collect(), scaler)
}

/// Running min/max scaling that never looks ahead: features are scaled with
/// ranges that include the current row, the target with ranges of past targets only.
#[derive(Debug, Clone)]
pub struct OnlineMinMax {
    ranges: Option<MinMaxScaler>,
}

impl OnlineMinMax {
    pub fn new() -> Self {
        Self { ranges: None }
    }

    pub fn next(&mut self, s: &Sample) -> Sample {
        let width = s.x.len() + 1;
        let r = self.ranges.get_or_insert_with(|| MinMaxScaler {
            min: vec![f64::INFINITY; width],
            max: vec![f64::NEG_INFINITY; width],
        });
        for (j, v) in s.x.iter().enumerate() {
            r.min[j] = r.min[j].min(*v);
            r.max[j] = r.max[j].max(*v);
        }
        let t = width - 1;
        let y = if r.max[t] >= r.min[t] { r.forward(t, s.y) } else { 0.0 };
        let out = Sample {
            x: s.x.iter().enumerate().map(|(j, v)| r.forward(j, *v)).collect(),
            y,
        };
        r.min[t] = r.min[t].min(s.y);
        r.max[t] = r.max[t].max(s.y);
        out
    }
}

impl Default for OnlineMinMax {
    fn default() -> Self {
        Self::new()
    }
}
