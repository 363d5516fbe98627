//! Seedable generators for the synthetic regression streams.
//!
//! Every generator is an iterator of [`Sample`]s; identical specs give
//! bit-identical streams (see [`crate::rng`] for the random source).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// One raw (not augmented) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Four-quadrant piecewise-linear model aligned with the coordinate axes.
    Matched,
    /// Piecewise-linear model with tilted, offset boundaries.
    Mismatched,
    /// `y_t = exp(-a x_t^2) + b` with `x_t = y_{t-1}`.
    GaussMap,
    /// Euler-discretized Lorenz system, target `y`, features `[u, v]`.
    Lorenz,
    /// `y = exp(x sin(4 pi x)) + noise`, `x ~ U[0, 1]`.
    Fig1,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Matched => "matched",
            GeneratorKind::Mismatched => "mismatched",
            GeneratorKind::GaussMap => "gauss_map",
            GeneratorKind::Lorenz => "lorenz",
            GeneratorKind::Fig1 => "fig1",
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            GeneratorKind::Matched | GeneratorKind::Mismatched | GeneratorKind::Lorenz => 2,
            GeneratorKind::GaussMap | GeneratorKind::Fig1 => 1,
        }
    }

    /// Observation noise variance used when none is configured. The chaotic
    /// recursions are noiseless.
    pub fn default_noise_variance(self) -> f64 {
        match self {
            GeneratorKind::GaussMap | GeneratorKind::Lorenz => 0.0,
            _ => 0.1,
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "matched" => GeneratorKind::Matched,
            "mismatched" => GeneratorKind::Mismatched,
            "gauss_map" | "gauss" => GeneratorKind::GaussMap,
            "lorenz" => GeneratorKind::Lorenz,
            "fig1" => GeneratorKind::Fig1,
            _ => return Err(Error::InvalidConfig(format!("unknown generator {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    /// Initial `(y, u, v)`.
    pub initial: [f64; 3],
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.01,
            initial: [1.0, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussMapParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GaussMapParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
    /// Defaults to [`GeneratorKind::default_noise_variance`].
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub lorenz: LorenzParams,
    #[serde(default)]
    pub gauss_map: GaussMapParams,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            seed,
            noise_variance: None,
            lorenz: LorenzParams::default(),
            gauss_map: GaussMapParams::default(),
        }
    }

    pub fn with_noise(mut self, variance: f64) -> Self {
        self.noise_variance = Some(variance);
        self
    }

    pub fn noise(&self) -> f64 {
        self.noise_variance
            .unwrap_or_else(|| self.kind.default_noise_variance())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("sample count must be at least 1".into()));
        }
        let noise = self.noise();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise variance {noise} must be >= 0")));
        }
        let l = &self.lorenz;
        let finite = [l.sigma, l.rho, l.beta, l.dt, self.gauss_map.alpha, self.gauss_map.beta]
            .iter()
            .chain(&l.initial)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("generator parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn stream(&self) -> Result<Generator> {
        self.validate()?;
        let mut rng = StreamRng::new(self.seed);
        let state = match self.kind {
            GeneratorKind::GaussMap => State::Gauss {
                x: rng.standard_normal(),
            },
            GeneratorKind::Lorenz => State::Lorenz {
                yuv: self.lorenz.initial,
            },
            _ => State::Iid,
        };
        Ok(Generator {
            spec: self.clone(),
            noise: self.noise(),
            rng,
            state,
            emitted: 0,
        })
    }

    pub fn generate(&self) -> Result<Vec<Sample>> {
        Ok(self.stream()?.collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Iid,
    Gauss { x: f64 },
    Lorenz { yuv: [f64; 3] },
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    noise: f64,
    rng: StreamRng,
    state: State,
    emitted: usize,
}

impl Generator {
    fn noise_sample(&mut self) -> f64 {
        if self.noise > 0.0 {
            self.rng.normal(0.0, self.noise)
        } else {
            0.0
        }
    }
}

impl Iterator for Generator {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.emitted >= self.spec.n {
            return None;
        }
        self.emitted += 1;
        let sample = match self.spec.kind {
            GeneratorKind::Matched | GeneratorKind::Mismatched => {
                let x = vec![self.rng.standard_normal(), self.rng.standard_normal()];
                let mean = if self.spec.kind == GeneratorKind::Matched {
                    matched_mean(&x)
                } else {
                    mismatched_mean(&x)
                };
                Sample {
                    y: mean + self.noise_sample(),
                    x,
                }
            }
            GeneratorKind::Fig1 => {
                let x = self.rng.uniform();
                Sample {
                    y: fig1_mean(x) + self.noise_sample(),
                    x: vec![x],
                }
            }
            GeneratorKind::GaussMap => {
                let State::Gauss { x } = self.state else {
                    unreachable!("gauss map state")
                };
                let g = &self.spec.gauss_map;
                let y = gauss_map(x, g.alpha, g.beta);
                self.state = State::Gauss { x: y };
                Sample {
                    x: vec![x],
                    y: y + self.noise_sample(),
                }
            }
            GeneratorKind::Lorenz => {
                let State::Lorenz { yuv } = self.state else {
                    unreachable!("lorenz state")
                };
                let next = lorenz_step(yuv, &self.spec.lorenz);
                self.state = State::Lorenz { yuv: next };
                Sample {
                    x: vec![next[1], next[2]],
                    y: next[0] + self.noise_sample(),
                }
            }
        };
        Some(sample)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.n - self.emitted;
        (left, Some(left))
    }
}

const W1: [f64; 2] = [1.0, 1.0];

/// Noise-free response of the axis-aligned four-region model.
pub fn matched_mean(x: &[f64]) -> f64 {
    const W2: [f64; 2] = [-1.0, -1.0];
    let a = x[0] >= 0.0; // x'n0, n0 = [1, 0]
    let b = x[1] >= 0.0; // x'n1, n1 = [0, 1]
    let w = if a == b { W1 } else { W2 };
    w[0] * x[0] + w[1] * x[1]
}

/// True boundary normals of the matched model (no offsets).
pub const MATCHED_NORMALS: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Boundaries of the mismatched model as `(normal, threshold)` pairs: the
/// root split `x'n0 >= 0.5`, then `x'n1 >= -0.5` on its upper side and
/// `x'n2 >= -0.5` on its lower side.
pub const MISMATCHED_BOUNDARIES: [([f64; 2], f64); 3] =
    [([2.0, -1.0], 0.5), ([-1.0, 1.0], -0.5), ([2.0, 1.0], -0.5)];

/// Noise-free response of the tilted four-region model.
pub fn mismatched_mean(x: &[f64]) -> f64 {
    const W2: [f64; 2] = [1.0, -1.0];
    let proj = |n: [f64; 2]| n[0] * x[0] + n[1] * x[1];
    let [(n0, t0), (n1, t1), (n2, t2)] = MISMATCHED_BOUNDARIES;
    let w = if proj(n0) >= t0 {
        if proj(n1) >= t1 {
            W1
        } else {
            W2
        }
    } else if proj(n2) >= t2 {
        W2
    } else {
        W1
    };
    w[0] * x[0] + w[1] * x[1]
}

pub fn gauss_map(x: f64, alpha: f64, beta: f64) -> f64 {
    (-alpha * x * x).exp() + beta
}

/// One forward-Euler step of `(y, u, v)`.
pub fn lorenz_step(yuv: [f64; 3], p: &LorenzParams) -> [f64; 3] {
    let [y, u, v] = yuv;
    [
        y + (p.sigma * (u - y)) * p.dt,
        u + (y * (p.rho - v) - u) * p.dt,
        v + (y * u - p.beta * v) * p.dt,
    ]
}

pub fn fig1_mean(x: f64) -> f64 {
    (x * (4.0 * std::f64::consts::PI * x).sin()).exp()
}
