//! Numerical kernel shared by every predictor.
//!
//! Holds bias augmentation, the logistic separator gate and its gradient, the
//! rank-one Sherman–Morrison update of an inverse second-order matrix, and the
//! Online Newton Step (ONS) parameter update built on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Exponent passed to `exp` is clamped to `[-EXPONENT_CLAMP, EXPONENT_CLAMP]`.
pub const EXPONENT_CLAMP: f64 = 500.0;
/// Gate values are clamped to `[GATE_FLOOR, 1 - GATE_FLOOR]`.
pub const GATE_FLOOR: f64 = 1e-12;
/// Regularizer of the initial second-order matrix when none is configured.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// The regularizer `1 / (beta^2 A^2)` used by the logarithmic regret analysis,
/// where `diameter` bounds `|w - w*|`.
pub fn theoretical_epsilon(step_size: f64, diameter: f64) -> Result<f64> {
    if !(step_size > 0.0 && diameter > 0.0) || !step_size.is_finite() || !diameter.is_finite() {
        return Err(Error::InvalidConfig(
            "step size and diameter bound must be positive and finite".into(),
        ));
    }
    Ok(1.0 / (step_size * step_size * diameter * diameter))
}

/// A feature vector with a trailing constant 1, paired with its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    features: Vec<f64>,
    target: f64,
}

impl AugmentedSample {
    pub fn new(x: &[f64], target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::NonFinite("target"));
        }
        Ok(Self {
            features: augment(x)?,
            target,
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Number of raw features, excluding the bias entry.
    pub fn raw_dim(&self) -> usize {
        self.features.len() - 1
    }
}

/// Appends the bias entry: `[x; 1]`.
pub fn augment(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(1.0);
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function with the exponent clamped; the output is not clamped.
#[inline]
pub fn logistic(z: f64) -> f64 {
    let z = z.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Soft membership of a point on the "0" side of a separator, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GateValue(f64);

impl GateValue {
    pub fn from_logit(z: f64) -> Self {
        GateValue(logistic(z).clamp(GATE_FLOOR, 1.0 - GATE_FLOOR))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `p (1 - p)`, the derivative of the logistic at this value.
    #[inline]
    pub fn slope(self) -> f64 {
        self.0 * (1.0 - self.0)
    }
}

#[inline]
pub(crate) fn gate_unchecked(normal: &[f64], x: &[f64]) -> f64 {
    GateValue::from_logit(dot(x, normal)).get()
}

/// `1 / (1 + exp(-x'n))`.
pub fn gate(normal: &[f64], x: &[f64]) -> Result<GateValue> {
    check_dim(normal.len(), x.len())?;
    Ok(GateValue::from_logit(dot(x, normal)))
}

/// Gradient of [`gate`] with respect to the normal vector, `x p (1 - p)`.
pub fn gate_grad(normal: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let slope = gate(normal, x)?.slope();
    Ok(x.iter().map(|v| v * slope).collect())
}

/// Coefficient multiplying `x` in the gradient of `e^2` with respect to a
/// regressor whose estimate enters the prediction with weight `weight`.
#[inline]
pub(crate) fn regressor_coefficient(error: f64, weight: f64) -> f64 {
    -2.0 * error * weight
}

/// Coefficient multiplying `x` in the gradient of `e^2` with respect to a
/// separator normal; `alpha` is the derivative of the prediction w.r.t. the gate.
#[inline]
pub(crate) fn separator_coefficient(error: f64, alpha: f64, gate: f64) -> f64 {
    -2.0 * error * alpha * (gate * (1.0 - gate))
}

/// Dense symmetric positive definite matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseHessian {
    dim: usize,
    data: Vec<f64>,
}

impl InverseHessian {
    /// `(1 / epsilon) I`.
    pub fn scaled_identity(dim: usize, epsilon: f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0 / epsilon;
        }
        Self { dim, data }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(dim * dim, data.len())?;
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    /// `out = self * v`.
    #[inline]
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = dot(&self.data[i * n..(i + 1) * n], v);
        }
    }

    /// In-place Sherman–Morrison step: `P <- P - P g g' P / (1 + g' P g)`,
    /// followed by symmetrization. `scratch` must hold `dim` entries.
    pub(crate) fn rank_one_update(&mut self, g: &[f64], scratch: &mut [f64]) {
        let n = self.dim;
        self.mul_vec_into(g, scratch);
        let denom = 1.0 + dot(g, &scratch[..n]);
        for i in 0..n {
            let ui = scratch[i] / denom;
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, uj) in row.iter_mut().zip(&scratch[..n]) {
                *r -= ui * uj;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg;
            }
        }
    }
}

/// Returns the Sherman–Morrison update of `inv_hessian` by the outer product `g g'`.
pub fn sherman_morrison_update(inv_hessian: &InverseHessian, g: &[f64]) -> Result<InverseHessian> {
    check_dim(inv_hessian.dim(), g.len())?;
    let mut out = inv_hessian.clone();
    let mut scratch = vec![0.0; g.len()];
    out.rank_one_update(g, &mut scratch);
    Ok(out)
}

/// Whether an ONS step was applied or rejected because of a non-finite gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Applied,
    Skipped,
}

/// A parameter vector together with its inverse second-order matrix and step size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnsState {
    param: Vec<f64>,
    inv_hessian: InverseHessian,
    step_size: f64,
    epsilon: f64,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl OnsState {
    /// Zero parameter vector of length `dim`, inverse matrix `(1/epsilon) I`.
    pub fn new(dim: usize, step_size: f64, epsilon: f64) -> Result<Self> {
        Self::with_param(vec![0.0; dim], step_size, epsilon)
    }

    pub fn with_param(param: Vec<f64>, step_size: f64, epsilon: f64) -> Result<Self> {
        validate_positive("step size", step_size)?;
        validate_positive("epsilon", epsilon)?;
        if param.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial parameter"));
        }
        let dim = param.len();
        Ok(Self {
            param,
            inv_hessian: InverseHessian::scaled_identity(dim, epsilon),
            step_size,
            epsilon,
            scratch: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.param.len()
    }

    pub fn param(&self) -> &[f64] {
        &self.param
    }

    pub fn inv_hessian(&self) -> &InverseHessian {
        &self.inv_hessian
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Overwrites the parameter vector; the second-order matrix is kept.
    pub fn set_param(&mut self, param: &[f64]) -> Result<()> {
        check_dim(self.param.len(), param.len())?;
        self.param.copy_from_slice(param);
        Ok(())
    }

    /// Online Newton Step: advance `A^-1` by `grad`, then
    /// `param -= (1 / step_size) A^-1 grad` using the advanced matrix.
    pub fn step(&mut self, grad: &[f64]) -> Result<StepStatus> {
        check_dim(self.param.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Ok(StepStatus::Skipped);
        }
        self.step_unchecked(grad);
        Ok(StepStatus::Applied)
    }

    /// Same as [`step`](Self::step) for a gradient of the form `coef * x`,
    /// without materializing the gradient. Caller guarantees finiteness.
    pub(crate) fn step_scaled(&mut self, coef: f64, x: &[f64], grad_buf: &mut [f64]) {
        for (g, v) in grad_buf.iter_mut().zip(x) {
            *g = coef * v;
        }
        self.step_unchecked(&grad_buf[..x.len()]);
    }

    fn step_unchecked(&mut self, grad: &[f64]) {
        let n = self.param.len();
        if self.scratch.len() != n {
            self.scratch.resize(n, 0.0);
        }
        self.inv_hessian.rank_one_update(grad, &mut self.scratch);
        self.inv_hessian.mul_vec_into(grad, &mut self.scratch);
        let rate = 1.0 / self.step_size;
        for (p, d) in self.param.iter_mut().zip(&self.scratch) {
            *p -= rate * d;
        }
    }
}

impl PartialEq for OnsState {
    fn eq(&self, other: &Self) -> bool {
        self.param == other.param
            && self.inv_hessian == other.inv_hessian
            && self.step_size == other.step_size
            && self.epsilon == other.epsilon
    }
}

fn validate_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} must be positive and finite, got {v}")))
    }
}
