//! Straight partitioning (SP).
//!
//! `K` soft hyperplanes each cut the whole regressor space. Every sign pattern
//! `r` in `{0,1}^K` owns a linear regressor, and its estimate is weighted by the
//! product over separators of `p` (character `0`) or `1 - p` (character `1`).
//! The final prediction is the sum of the weighted estimates; regressors and
//! separators are both trained with Online Newton Steps.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::labels::NodeLabel;
use crate::model::{
    check_version, validate_rate, NormalFactory, OnlineRegressor, SeparatorInit, StepReport,
    CHECKPOINT_VERSION,
};
use crate::second_order::{
    dot, gate_unchecked, regressor_coefficient, separator_coefficient, OnsState, DEFAULT_EPSILON,
};

/// Largest supported separator count (`2^K` regions are tracked).
pub const MAX_SEPARATORS: usize = 20;

/// Upper bound on the number of cells `k` hyperplanes cut the plane into.
pub fn sp_max_regions(k: u64) -> u64 {
    (k * k + k + 2) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpConfig {
    pub separators: usize,
    /// Regressor step size.
    pub beta: f64,
    /// Separator step size.
    pub eta: f64,
    pub epsilon: f64,
    /// Regularizer of the separators' inverse matrices; `epsilon` when unset.
    #[serde(default)]
    pub separator_epsilon: Option<f64>,
    #[serde(default)]
    pub freeze_separators: bool,
    #[serde(default)]
    pub init: SeparatorInit,
}

impl SpConfig {
    pub fn new(separators: usize, beta: f64, eta: f64) -> Self {
        Self {
            separators,
            beta,
            eta,
            epsilon: DEFAULT_EPSILON,
            separator_epsilon: None,
            freeze_separators: false,
            init: SeparatorInit::AxisAligned,
        }
    }

    pub fn separator_epsilon(&self) -> f64 {
        self.separator_epsilon.unwrap_or(self.epsilon)
    }
}

/// One region's contribution to a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTerm {
    pub label: NodeLabel,
    /// `w_r' x`
    pub estimate: f64,
    /// Product of the region's gate factors.
    pub gate_product: f64,
    /// `estimate * gate_product`
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpPrediction {
    pub y_hat: f64,
    pub regions: Vec<RegionTerm>,
    pub gates: Vec<f64>,
}

/// Gradients of `e^2` that an update would apply, from pre-update values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpGradients {
    pub error: f64,
    pub regions: Vec<Vec<f64>>,
    pub separators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    gates: Vec<f64>,
    estimates: Vec<f64>,
    products: Vec<f64>,
    alphas: Vec<f64>,
    factors: Vec<f64>,
    prefix: Vec<f64>,
    grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpModel {
    dim: usize,
    separators: Vec<OnsState>,
    regions: Vec<OnsState>,
    freeze_separators: bool,
    work: Workspace,
}

impl SpModel {
    /// `dim` is the augmented dimension `m + 1`.
    pub fn new(dim: usize, config: &SpConfig) -> Result<Self> {
        let k = config.separators;
        if k > MAX_SEPARATORS {
            return Err(Error::InvalidConfig(format!(
                "at most {MAX_SEPARATORS} separators are supported, got {k}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must include the bias".into()));
        }
        validate_rate("beta", config.beta)?;
        validate_rate("eta", config.eta)?;
        let mut normals = NormalFactory::new(config.init, dim);
        let separators = (0..k)
            .map(|i| OnsState::with_param(normals.next(i), config.eta, config.separator_epsilon()))
            .collect::<Result<Vec<_>>>()?;
        let regions = (0..1usize << k)
            .map(|_| OnsState::new(dim, config.beta, config.epsilon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(dim, separators, regions, config.freeze_separators))
    }

    fn assemble(
        dim: usize,
        separators: Vec<OnsState>,
        regions: Vec<OnsState>,
        freeze_separators: bool,
    ) -> Self {
        let k = separators.len();
        let work = Workspace {
            gates: vec![0.0; k],
            estimates: vec![0.0; regions.len()],
            products: vec![0.0; regions.len()],
            alphas: vec![0.0; k],
            factors: vec![0.0; k],
            prefix: vec![0.0; k],
            grad: vec![0.0; dim],
        };
        Self {
            dim,
            separators,
            regions,
            freeze_separators,
            work,
        }
    }

    pub fn num_separators(&self) -> usize {
        self.separators.len()
    }

    pub fn region_labels(&self) -> impl Iterator<Item = NodeLabel> {
        NodeLabel::all_of_length(self.separators.len())
    }

    pub fn separators(&self) -> &[OnsState] {
        &self.separators
    }

    pub fn regions(&self) -> &[OnsState] {
        &self.regions
    }

    pub fn separators_mut(&mut self) -> &mut [OnsState] {
        &mut self.separators
    }

    pub fn regions_mut(&mut self) -> &mut [OnsState] {
        &mut self.regions
    }

    pub fn separators_frozen(&self) -> bool {
        self.freeze_separators
    }

    pub fn set_freeze_separators(&mut self, freeze: bool) {
        self.freeze_separators = freeze;
    }

    /// Fills the workspace and returns the prediction. Separator sensitivities
    /// `alpha_k = d y_hat / d p_k` are accumulated with prefix/suffix products of
    /// the other gate factors, so no division by a gate is needed.
    fn forward(&self, x: &[f64], work: &mut Workspace) -> f64 {
        let k = self.separators.len();
        for (g, sep) in work.gates.iter_mut().zip(&self.separators) {
            *g = gate_unchecked(sep.param(), x);
        }
        work.alphas.iter_mut().for_each(|a| *a = 0.0);
        let mut y_hat = 0.0;
        for (r, region) in self.regions.iter().enumerate() {
            let estimate = dot(region.param(), x);
            let mut product = 1.0;
            for i in 0..k {
                let p = work.gates[i];
                let factor = if (r >> (k - 1 - i)) & 1 == 0 { p } else { 1.0 - p };
                work.prefix[i] = product;
                work.factors[i] = factor;
                product *= factor;
            }
            let mut suffix = 1.0;
            for i in (0..k).rev() {
                let others = work.prefix[i] * suffix;
                if (r >> (k - 1 - i)) & 1 == 0 {
                    work.alphas[i] += estimate * others;
                } else {
                    work.alphas[i] -= estimate * others;
                }
                suffix *= work.factors[i];
            }
            work.estimates[r] = estimate;
            work.products[r] = product;
            y_hat += estimate * product;
        }
        y_hat
    }

    fn fresh_workspace(&self) -> Workspace {
        self.work.clone()
    }

    pub fn predict_detailed(&self, x: &[f64]) -> Result<SpPrediction> {
        check_dim(self.dim, x.len())?;
        let mut work = self.fresh_workspace();
        let y_hat = self.forward(x, &mut work);
        let regions = self
            .region_labels()
            .enumerate()
            .map(|(r, label)| RegionTerm {
                label,
                estimate: work.estimates[r],
                gate_product: work.products[r],
                weighted: work.estimates[r] * work.products[r],
            })
            .collect();
        Ok(SpPrediction {
            y_hat,
            regions,
            gates: work.gates,
        })
    }

    pub fn gradients(&self, x: &[f64], y: f64) -> Result<SpGradients> {
        check_dim(self.dim, x.len())?;
        let mut work = self.fresh_workspace();
        let error = y - self.forward(x, &mut work);
        let scale = |c: f64| x.iter().map(|v| c * v).collect::<Vec<_>>();
        Ok(SpGradients {
            error,
            regions: work
                .products
                .iter()
                .map(|&w| scale(regressor_coefficient(error, w)))
                .collect(),
            separators: work
                .alphas
                .iter()
                .zip(&work.gates)
                .map(|(&a, &p)| scale(separator_coefficient(error, a, p)))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let labels: Vec<NodeLabel> = self.region_labels().collect();
        let doc = SpCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: "sp".into(),
            dim: self.dim,
            freeze_separators: self.freeze_separators,
            separators: self
                .separators
                .iter()
                .enumerate()
                .map(|(i, s)| IndexedState {
                    id: i,
                    state: s.clone(),
                })
                .collect(),
            regions: labels
                .into_iter()
                .zip(&self.regions)
                .map(|(label, s)| LabeledState {
                    label,
                    state: s.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("sp checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SpCheckpoint = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("bad checkpoint: {e}")))?;
        check_version(doc.version)?;
        if doc.kind != "sp" {
            return Err(Error::InvalidConfig(format!("expected sp checkpoint, got {}", doc.kind)));
        }
        let k = doc.separators.len();
        if k > MAX_SEPARATORS || doc.regions.len() != 1 << k {
            return Err(Error::InvalidConfig("region count must be 2^K".into()));
        }
        let mut regions: Vec<Option<OnsState>> = vec![None; 1 << k];
        for entry in doc.regions {
            if entry.label.len() != k || regions[entry.label.bits() as usize].is_some() {
                return Err(Error::InvalidLabel(entry.label.to_string()));
            }
            check_dim(doc.dim, entry.state.dim())?;
            regions[entry.label.bits() as usize] = Some(entry.state);
        }
        let mut separators = doc.separators;
        separators.sort_by_key(|s| s.id);
        let separators: Vec<OnsState> = separators
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if s.id != i {
                    return Err(Error::InvalidConfig(format!("separator id {} out of order", s.id)));
                }
                check_dim(doc.dim, s.state.dim())?;
                Ok(s.state)
            })
            .collect::<Result<_>>()?;
        let regions = regions.into_iter().map(|r| r.expect("all filled")).collect();
        Ok(Self::assemble(doc.dim, separators, regions, doc.freeze_separators))
    }
}

#[derive(Serialize, Deserialize)]
struct IndexedState {
    id: usize,
    state: OnsState,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct LabeledState {
    pub(crate) label: NodeLabel,
    pub(crate) state: OnsState,
}

#[derive(Serialize, Deserialize)]
struct SpCheckpoint {
    version: u32,
    kind: String,
    dim: usize,
    freeze_separators: bool,
    separators: Vec<IndexedState>,
    regions: Vec<LabeledState>,
}

impl OnlineRegressor for SpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let mut work = self.fresh_workspace();
        Ok(self.forward(x, &mut work))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<StepReport> {
        check_dim(self.dim, x.len())?;
        let mut work = std::mem::take(&mut self.work);
        let prediction = self.forward(x, &mut work);
        let error = y - prediction;
        let skipped = !error.is_finite()
            || x.iter().any(|v| !v.is_finite())
            || work.alphas.iter().any(|a| !a.is_finite());
        if !skipped {
            for (region, &w) in self.regions.iter_mut().zip(&work.products) {
                region.step_scaled(regressor_coefficient(error, w), x, &mut work.grad);
            }
            if !self.freeze_separators {
                for ((sep, &a), &p) in self.separators.iter_mut().zip(&work.alphas).zip(&work.gates) {
                    sep.step_scaled(separator_coefficient(error, a, p), x, &mut work.grad);
                }
            }
        }
        self.work = work;
        Ok(StepReport {
            prediction,
            error,
            skipped,
        })
    }

    fn gated_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut work = self.fresh_workspace();
        self.forward(x, &mut work);
        Ok(work
            .products
            .iter()
            .flat_map(|&w| x.iter().map(move |v| w * v))
            .collect())
    }

    fn regressor_params(&self) -> Vec<f64> {
        self.regions.iter().flat_map(|r| r.param().to_vec()).collect()
    }

    fn separator_normals(&self) -> Vec<(String, Vec<f64>)> {
        self.separators
            .iter()
            .enumerate()
            .map(|(i, s)| (i.to_string(), s.param().to_vec()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with(k: usize, dim: usize) -> SpModel {
        SpModel::new(dim, &SpConfig::new(k, 0.1, 0.1)).unwrap()
    }

    /// Forces gate i to (approximately) the requested value at x = [.., 1] by
    /// putting the logit in the bias entry.
    fn force_gates(m: &mut SpModel, gates: &[f64]) {
        let dim = m.dim;
        for (sep, &p) in m.separators_mut().iter_mut().zip(gates) {
            let mut n = vec![0.0; dim];
            n[dim - 1] = (p / (1.0 - p)).ln();
            sep.set_param(&n).unwrap();
        }
    }

    #[test]
    fn max_regions() {
        assert_eq!(sp_max_regions(0), 1);
        assert_eq!(sp_max_regions(1), 2);
        assert_eq!(sp_max_regions(2), 4);
        assert_eq!(sp_max_regions(4), 11);
    }

    #[test]
    fn hand_expanded_two_separators() {
        let mut m = model_with(2, 3);
        let w = [[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [-1.0, -1.0, 0.0], [1.0, 1.0, 0.0]];
        for (reg, w) in m.regions_mut().iter_mut().zip(&w) {
            reg.set_param(w).unwrap();
        }
        for (sep, n) in m.separators_mut().iter_mut().zip([0.9f64, 0.8]) {
            // gate logit placed on the bias so that x = [0.5, 0.5, 1] yields exactly n
            sep.set_param(&[0.0, 0.0, (n / (1.0 - n)).ln()]).unwrap();
        }
        let pred = m.predict_detailed(&[0.5, 0.5, 1.0]).unwrap();
        let expect = 0.9 * 0.8 - 0.9 * 0.2 - 0.1 * 0.8 + 0.1 * 0.2;
        assert!((expect - 0.48f64).abs() < 1e-12);
        assert!((pred.y_hat - 0.48).abs() < 1e-12);
        let sum: f64 = pred.regions.iter().map(|r| r.weighted).sum();
        assert!((sum - pred.y_hat).abs() < 1e-12);
        let labels: Vec<String> = pred.regions.iter().map(|r| r.label.to_string()).collect();
        assert_eq!(labels, ["00", "01", "10", "11"]);
    }

    #[test]
    fn saturated_and_half_gates() {
        let mut m = model_with(2, 2);
        let ws = [[2.0, 1.0], [-3.0, 0.5], [4.0, -1.0], [0.25, 0.0]];
        for (reg, w) in m.regions_mut().iter_mut().zip(&ws) {
            reg.set_param(w).unwrap();
        }
        let x = [0.7, 1.0];
        let ests: Vec<f64> = ws.iter().map(|w| dot(w, &x)).collect();
        force_gates(&mut m, &[0.5, 0.5]);
        let mean = ests.iter().sum::<f64>() / 4.0;
        assert!((m.predict(&x).unwrap() - mean).abs() < 1e-12);
        for sep in m.separators_mut() {
            sep.set_param(&[0.0, 600.0]).unwrap();
        }
        assert!((m.predict(&x).unwrap() - ests[0]).abs() < 1e-10);
    }

    #[test]
    fn single_separator_alpha_is_difference() {
        let mut m = model_with(1, 2);
        m.regions_mut()[0].set_param(&[1.0, 2.0]).unwrap();
        m.regions_mut()[1].set_param(&[-0.5, 0.3]).unwrap();
        m.separators_mut()[0].set_param(&[0.4, -0.2]).unwrap();
        let x = [0.8, 1.0];
        let mut work = m.fresh_workspace();
        m.forward(&x, &mut work);
        let y0 = 1.0 * 0.8 + 2.0;
        let y1 = -0.5 * 0.8 + 0.3;
        assert!((work.alphas[0] - (y0 - y1)).abs() < 1e-15);
    }

    #[test]
    fn zero_error_leaves_model_unchanged() {
        let mut m = model_with(2, 3);
        m.separators_mut()[0].set_param(&[0.3, -0.1, 0.2]).unwrap();
        let before = m.to_json();
        // all regression weights are zero, so y = 0 yields e = 0
        let r = m.update(&[0.4, -1.2, 1.0], 0.0).unwrap();
        assert_eq!(r.error, 0.0);
        assert_eq!(m.to_json(), before);
    }

    #[test]
    fn zero_separators_is_linear_ons() {
        use crate::linear::LinearOns;
        let mut sp = SpModel::new(3, &SpConfig::new(0, 0.3, 0.3)).unwrap();
        let mut lin = LinearOns::new(3, 0.3, DEFAULT_EPSILON).unwrap();
        for t in 0..500 {
            let a = (t as f64 * 0.37).sin();
            let b = (t as f64 * 0.11).cos();
            let x = [a, b, 1.0];
            let y = 2.0 * a - b + 0.3;
            let e1 = sp.update(&x, y).unwrap().error;
            let e2 = lin.update(&x, y).unwrap().error;
            assert_eq!(e1.to_bits(), e2.to_bits());
        }
    }

    #[test]
    fn non_finite_target_is_skipped() {
        let mut m = model_with(1, 2);
        let before = m.to_json();
        let r = m.update(&[0.5, 1.0], f64::NAN).unwrap();
        assert!(r.skipped);
        assert_eq!(m.to_json(), before);
    }

    #[test]
    fn dimension_checked() {
        let m = model_with(2, 3);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = model_with(2, 3);
        for t in 0..20 {
            let x = [(t as f64).sin(), (t as f64 * 0.5).cos(), 1.0];
            m.update(&x, x[0] * x[1]).unwrap();
        }
        let json = m.to_json();
        let back = SpModel::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert!(json.contains("\"label\":\"01\""));
    }
}
