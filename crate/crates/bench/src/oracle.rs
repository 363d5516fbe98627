//! Best fixed comparator in hindsight: ridge least squares over the gated
//! features of a frozen partition.

use nalgebra::{DMatrix, DVector};

use crate::error::{BenchError, Result};

/// Normal equations accumulated one sample at a time.
#[derive(Debug, Clone)]
pub struct HindsightOracle {
    dim: usize,
    ridge: f64,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    target_sq: f64,
    count: usize,
}

/// Minimizer of the cumulative squared loss so far and that loss.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFit {
    pub weights: Vec<f64>,
    pub loss: f64,
}

impl OracleFit {
    /// Splits the stacked weights into per-region blocks of `block` entries.
    pub fn per_region(&self, block: usize) -> Vec<Vec<f64>> {
        self.weights.chunks(block).map(<[f64]>::to_vec).collect()
    }
}

impl HindsightOracle {
    /// `ridge` conditions the normal equations (the models' epsilon).
    pub fn new(dim: usize, ridge: f64) -> Self {
        Self {
            dim,
            ridge,
            gram: DMatrix::zeros(dim, dim),
            cross: DVector::zeros(dim),
            target_sq: 0.0,
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, features: &[f64], y: f64) -> Result<()> {
        if features.len() != self.dim {
            return Err(BenchError::Config(format!(
                "oracle expects {} features, got {}",
                self.dim,
                features.len()
            )));
        }
        let z = DVector::from_column_slice(features);
        self.gram.ger(1.0, &z, &z, 1.0);
        self.cross.axpy(y, &z, 1.0);
        self.target_sq += y * y;
        self.count += 1;
        Ok(())
    }

    /// Solves `(G + ridge I) w = b` and evaluates the unregularized loss
    /// `sum (y - w'z)^2 = sum y^2 - 2 w'b + w'G w`.
    pub fn fit(&self) -> OracleFit {
        let mut a = self.gram.clone();
        for i in 0..self.dim {
            a[(i, i)] += self.ridge;
        }
        let w = match a.clone().cholesky() {
            Some(c) => c.solve(&self.cross),
            None => a.lu().solve(&self.cross).unwrap_or_else(|| DVector::zeros(self.dim)),
        };
        let loss = self.target_sq - 2.0 * w.dot(&self.cross) + w.dot(&(&self.gram * &w));
        OracleFit {
            weights: w.iter().copied().collect(),
            loss: loss.max(0.0),
        }
    }
}

/// Batch form: fits the comparator over all `(features, target)` pairs.
pub fn hindsight_oracle<'a>(
    samples: impl IntoIterator<Item = (&'a [f64], f64)>,
    dim: usize,
    ridge: f64,
) -> Result<OracleFit> {
    let mut o = HindsightOracle::new(dim, ridge);
    for (z, y) in samples {
        o.push(z, y)?;
    }
    Ok(o.fit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistent_system_is_reproduced() {
        let data = [([1.0, 1.0], 2.0), ([2.0, 1.0], 4.0)];
        let fit = hindsight_oracle(data.iter().map(|(z, y)| (&z[..], *y)), 2, 1e-9).unwrap();
        assert!((fit.weights[0] - 2.0).abs() < 1e-6);
        assert!(fit.weights[1].abs() < 1e-6);
        assert!(fit.loss < 1e-9);
    }

    #[test]
    fn loss_matches_direct_evaluation() {
        let data: Vec<([f64; 2], f64)> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                ([x, 1.0], 0.5 * x + (i as f64).cos())
            })
            .collect();
        let fit = hindsight_oracle(data.iter().map(|(z, y)| (&z[..], *y)), 2, 0.1).unwrap();
        let direct: f64 = data
            .iter()
            .map(|(z, y)| (y - fit.weights[0] * z[0] - fit.weights[1] * z[1]).powi(2))
            .sum();
        assert!((fit.loss - direct).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn grid_search_cannot_beat_the_fit() {
        let data: Vec<([f64; 2], f64)> = (0..40)
            .map(|i| {
                let x = i as f64 / 20.0 - 1.0;
                ([x, 1.0], 1.3 * x - 0.2 + 0.3 * (7.0 * x).sin())
            })
            .collect();
        let fit = hindsight_oracle(data.iter().map(|(z, y)| (&z[..], *y)), 2, 1e-8).unwrap();
        let loss = |a: f64, b: f64| data.iter().map(|(z, y)| (y - a * z[0] - b * z[1]).powi(2)).sum::<f64>();
        let mut best = (f64::MAX, 0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (i as f64 / 100.0 - 2.0, j as f64 / 100.0 - 2.0);
                let l = loss(a, b);
                if l < best.0 {
                    best = (l, a, b);
                }
            }
        }
        assert!(fit.loss <= best.0 + 1e-9);
        assert!((fit.weights[0] - best.1).abs() <= 0.01);
        assert!((fit.weights[1] - best.2).abs() <= 0.01);
    }

    #[test]
    fn singular_design_still_solves() {
        let data = [([1.0, 1.0], 1.0), ([1.0, 1.0], 1.0)];
        let fit = hindsight_oracle(data.iter().map(|(z, y)| (&z[..], *y)), 2, 0.1).unwrap();
        assert!(fit.weights.iter().all(|w| w.is_finite()));
    }
}
