//! Finest-model partitioning (FMP).
//!
//! A depth-`d` binary tree of soft separators. Internal nodes are stored in
//! breadth-first order (`NodeLabel::heap_index`), leaves in increasing label
//! order. A leaf's weight is the product of gate factors along its root path;
//! the prediction is the weighted sum of the `2^d` leaf regressors.

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
use crate::sp::LabeledState;

pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmpConfig {
    pub depth: usize,
    pub beta: f64,
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

impl FmpConfig {
    pub fn new(depth: usize, beta: f64, eta: f64) -> Self {
        Self {
            depth,
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

#[derive(Debug, Clone, PartialEq)]
pub struct LeafTerm {
    pub label: NodeLabel,
    pub estimate: f64,
    /// Product of gate factors along the root-to-leaf path.
    pub path_product: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmpPrediction {
    pub y_hat: f64,
    pub leaves: Vec<LeafTerm>,
    /// Gate value of every internal node, breadth-first.
    pub gates: Vec<(NodeLabel, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmpGradients {
    pub error: f64,
    pub leaves: Vec<Vec<f64>>,
    pub separators: Vec<Vec<f64>>,
}

/// Per-node buffers over the full heap (internal nodes followed by leaves).
#[derive(Debug, Clone, Default)]
pub(crate) struct TreeWork {
    pub(crate) gates: Vec<f64>,
    /// Product of gate factors from the root down to each node.
    pub(crate) path: Vec<f64>,
    pub(crate) estimates: Vec<f64>,
    /// Subtree sums used for separator sensitivities.
    pub(crate) subtree: Vec<f64>,
    pub(crate) alphas: Vec<f64>,
    pub(crate) grad: Vec<f64>,
}

impl TreeWork {
    pub(crate) fn new(depth: usize, dim: usize) -> Self {
        let internal = (1 << depth) - 1;
        let nodes = (1 << (depth + 1)) - 1;
        Self {
            gates: vec![0.0; internal],
            path: vec![0.0; nodes],
            estimates: vec![0.0; nodes],
            subtree: vec![0.0; nodes],
            alphas: vec![0.0; internal],
            grad: vec![0.0; dim],
        }
    }

    /// Evaluates every internal gate and the root-to-node path products.
    pub(crate) fn descend(&mut self, separators: &[OnsState], x: &[f64]) {
        for (g, sep) in self.gates.iter_mut().zip(separators) {
            *g = gate_unchecked(sep.param(), x);
        }
        self.path[0] = 1.0;
        for k in 0..separators.len() {
            let p = self.gates[k];
            let above = self.path[k];
            self.path[2 * k + 1] = above * p;
            self.path[2 * k + 2] = above * (1.0 - p);
        }
    }

    /// Given `subtree` filled at the leaves, folds it upward with
    /// `s_k = own_k + p_k s_left + (1 - p_k) s_right` and sets
    /// `alpha_k = path_k (s_left - s_right)`, the derivative of the
    /// prediction with respect to gate `k`.
    pub(crate) fn ascend(&mut self, own: Option<&[f64]>) {
        for k in (0..self.gates.len()).rev() {
            let p = self.gates[k];
            let (left, right) = (self.subtree[2 * k + 1], self.subtree[2 * k + 2]);
            let mixed = p * left + (1.0 - p) * right;
            self.subtree[k] = match own {
                Some(own) => own[k] + mixed,
                None => mixed,
            };
            self.alphas[k] = self.path[k] * (left - right);
        }
    }
}

#[derive(Debug, Clone)]
pub struct FmpModel {
    depth: usize,
    dim: usize,
    separators: Vec<OnsState>,
    leaves: Vec<OnsState>,
    freeze_separators: bool,
    work: TreeWork,
}

impl FmpModel {
    pub fn new(dim: usize, config: &FmpConfig) -> Result<Self> {
        let d = config.depth;
        if d == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if d > MAX_DEPTH {
            return Err(Error::DepthCap {
                depth: d,
                max: MAX_DEPTH,
            });
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must include the bias".into()));
        }
        validate_rate("beta", config.beta)?;
        validate_rate("eta", config.eta)?;
        let separators = internal_separators(d, dim, config.init, config.eta, config.separator_epsilon())?;
        let leaves = (0..1usize << d)
            .map(|_| OnsState::new(dim, config.beta, config.epsilon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(d, dim, separators, leaves, config.freeze_separators))
    }

    fn assemble(
        depth: usize,
        dim: usize,
        separators: Vec<OnsState>,
        leaves: Vec<OnsState>,
        freeze_separators: bool,
    ) -> Self {
        Self {
            depth,
            dim,
            separators,
            leaves,
            freeze_separators,
            work: TreeWork::new(depth, dim),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Internal node labels, breadth-first.
    pub fn separator_labels(&self) -> impl Iterator<Item = NodeLabel> {
        (0..self.separators.len()).map(|i| NodeLabel::from_heap_index(i).expect("valid index"))
    }

    pub fn leaf_labels(&self) -> impl Iterator<Item = NodeLabel> {
        NodeLabel::all_of_length(self.depth)
    }

    pub fn separators(&self) -> &[OnsState] {
        &self.separators
    }

    pub fn leaves(&self) -> &[OnsState] {
        &self.leaves
    }

    pub fn separators_mut(&mut self) -> &mut [OnsState] {
        &mut self.separators
    }

    pub fn leaves_mut(&mut self) -> &mut [OnsState] {
        &mut self.leaves
    }

    pub fn separator(&self, label: NodeLabel) -> Option<&OnsState> {
        (label.len() < self.depth).then(|| &self.separators[label.heap_index()])
    }

    pub fn leaf(&self, label: NodeLabel) -> Option<&OnsState> {
        (label.len() == self.depth).then(|| &self.leaves[label.bits() as usize])
    }

    pub fn separators_frozen(&self) -> bool {
        self.freeze_separators
    }

    pub fn set_freeze_separators(&mut self, freeze: bool) {
        self.freeze_separators = freeze;
    }

    fn forward(&self, x: &[f64], work: &mut TreeWork) -> f64 {
        work.descend(&self.separators, x);
        let first_leaf = self.separators.len();
        let mut y_hat = 0.0;
        for (j, leaf) in self.leaves.iter().enumerate() {
            let estimate = dot(leaf.param(), x);
            work.estimates[first_leaf + j] = estimate;
            work.subtree[first_leaf + j] = estimate;
            y_hat += estimate * work.path[first_leaf + j];
        }
        work.ascend(None);
        y_hat
    }

    pub fn predict_detailed(&self, x: &[f64]) -> Result<FmpPrediction> {
        check_dim(self.dim, x.len())?;
        let mut work = self.work.clone();
        let y_hat = self.forward(x, &mut work);
        let first_leaf = self.separators.len();
        let leaves = self
            .leaf_labels()
            .enumerate()
            .map(|(j, label)| {
                let estimate = work.estimates[first_leaf + j];
                let path_product = work.path[first_leaf + j];
                LeafTerm {
                    label,
                    estimate,
                    path_product,
                    weighted: estimate * path_product,
                }
            })
            .collect();
        Ok(FmpPrediction {
            y_hat,
            leaves,
            gates: self.separator_labels().zip(work.gates.iter().copied()).collect(),
        })
    }

    pub fn gradients(&self, x: &[f64], y: f64) -> Result<FmpGradients> {
        check_dim(self.dim, x.len())?;
        let mut work = self.work.clone();
        let error = y - self.forward(x, &mut work);
        let scale = |c: f64| x.iter().map(|v| c * v).collect::<Vec<_>>();
        let first_leaf = self.separators.len();
        Ok(FmpGradients {
            error,
            leaves: work.path[first_leaf..]
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
        let doc = FmpCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: "fmp".into(),
            depth: self.depth,
            dim: self.dim,
            freeze_separators: self.freeze_separators,
            separators: labeled(self.separator_labels(), &self.separators),
            leaves: labeled(self.leaf_labels(), &self.leaves),
        };
        serde_json::to_string(&doc).expect("fmp checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FmpCheckpoint = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("bad checkpoint: {e}")))?;
        check_version(doc.version)?;
        if doc.kind != "fmp" {
            return Err(Error::InvalidConfig(format!("expected fmp checkpoint, got {}", doc.kind)));
        }
        let d = doc.depth;
        if d == 0 || d > MAX_DEPTH {
            return Err(Error::DepthCap {
                depth: d,
                max: MAX_DEPTH,
            });
        }
        let separators = unlabel(doc.separators, (1 << d) - 1, doc.dim, |l| {
            (l.len() < d).then(|| l.heap_index())
        })?;
        let leaves = unlabel(doc.leaves, 1 << d, doc.dim, |l| {
            (l.len() == d).then(|| l.bits() as usize)
        })?;
        Ok(Self::assemble(d, doc.dim, separators, leaves, doc.freeze_separators))
    }
}

pub(crate) fn internal_separators(
    depth: usize,
    dim: usize,
    init: SeparatorInit,
    eta: f64,
    epsilon: f64,
) -> Result<Vec<OnsState>> {
    let mut normals = NormalFactory::new(init, dim);
    (0..(1usize << depth) - 1)
        .map(|k| {
            let level = NodeLabel::from_heap_index(k)?.len();
            OnsState::with_param(normals.next(level), eta, epsilon)
        })
        .collect()
}

pub(crate) fn labeled(
    labels: impl Iterator<Item = NodeLabel>,
    states: &[OnsState],
) -> Vec<LabeledState> {
    labels
        .zip(states)
        .map(|(label, state)| LabeledState {
            label,
            state: state.clone(),
        })
        .collect()
}

pub(crate) fn unlabel(
    entries: Vec<LabeledState>,
    expected: usize,
    dim: usize,
    slot: impl Fn(NodeLabel) -> Option<usize>,
) -> Result<Vec<OnsState>> {
    if entries.len() != expected {
        return Err(Error::InvalidConfig(format!(
            "expected {expected} entries, found {}",
            entries.len()
        )));
    }
    let mut out: Vec<Option<OnsState>> = vec![None; expected];
    for e in entries {
        let i = slot(e.label)
            .filter(|&i| i < expected && out[i].is_none())
            .ok_or_else(|| Error::InvalidLabel(e.label.to_string()))?;
        check_dim(dim, e.state.dim())?;
        out[i] = Some(e.state);
    }
    Ok(out.into_iter().map(|s| s.expect("all slots filled")).collect())
}

#[derive(Serialize, Deserialize)]
struct FmpCheckpoint {
    version: u32,
    kind: String,
    depth: usize,
    dim: usize,
    freeze_separators: bool,
    separators: Vec<LabeledState>,
    leaves: Vec<LabeledState>,
}

impl OnlineRegressor for FmpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let mut work = self.work.clone();
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
            let first_leaf = self.separators.len();
            for (leaf, &w) in self.leaves.iter_mut().zip(&work.path[first_leaf..]) {
                leaf.step_scaled(regressor_coefficient(error, w), x, &mut work.grad);
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
        let mut work = self.work.clone();
        self.forward(x, &mut work);
        Ok(work.path[self.separators.len()..]
            .iter()
            .flat_map(|&w| x.iter().map(move |v| w * v))
            .collect())
    }

    fn regressor_params(&self) -> Vec<f64> {
        self.leaves.iter().flat_map(|r| r.param().to_vec()).collect()
    }

    fn separator_normals(&self) -> Vec<(String, Vec<f64>)> {
        self.separator_labels()
            .zip(&self.separators)
            .map(|(l, s)| (l.to_string(), s.param().to_vec()))
            .collect()
    }
}
