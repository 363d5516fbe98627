//! Linear combination of every pruning of a depth-`d` tree.
//!
//! Each pruning (a set of nodes covering every root-to-leaf path exactly once)
//! defines a piecewise-linear model. All prunings share one regressor per tree
//! node and one separator per internal node; their estimates `phi` are mixed by
//! a combiner vector `v`, itself trained with ONS. Because of the sharing the
//! prediction collapses to `sum_r c_r (w_r' x) path_r` with
//! `c_r = sum of v over prunings containing r`, so gradients cost one tree pass
//! plus the combiner.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fmp::{internal_separators, labeled, unlabel, TreeWork};
use crate::labels::NodeLabel;
use crate::model::{
    check_version, validate_rate, OnlineRegressor, SeparatorInit, StepReport, CHECKPOINT_VERSION,
};
use crate::second_order::{
    dot, regressor_coefficient, separator_coefficient, OnsState, DEFAULT_EPSILON,
};
use crate::sp::LabeledState;

/// Deepest tree whose prunings are enumerated (677 models at depth 4).
pub const MAX_ENSEMBLE_DEPTH: usize = 4;

/// Number of prunings of a depth-`d` tree: `M_0 = 1`, `M_d = M_{d-1}^2 + 1`.
pub fn count_prunings(depth: usize) -> Result<u64> {
    if depth > MAX_ENSEMBLE_DEPTH {
        return Err(Error::DepthCap {
            depth,
            max: MAX_ENSEMBLE_DEPTH,
        });
    }
    Ok((0..depth).fold(1u64, |m, _| m * m + 1))
}

/// An antichain of nodes covering every depth-`d` path exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pruning {
    leaf_set: Vec<NodeLabel>,
}

impl Pruning {
    pub fn new(leaf_set: Vec<NodeLabel>) -> Self {
        Self { leaf_set }
    }

    pub fn leaf_set(&self) -> &[NodeLabel] {
        &self.leaf_set
    }

    /// True when every label of length `depth` has exactly one prefix in the set.
    pub fn is_valid_cover(&self, depth: usize) -> bool {
        self.leaf_set.iter().all(|l| l.len() <= depth)
            && NodeLabel::all_of_length(depth).all(|path| {
                self.leaf_set.iter().filter(|l| l.is_prefix_of(path)).count() == 1
            })
    }
}

/// Every pruning in canonical order: the root alone first, then each pruning
/// of the left subtree combined with each pruning of the right subtree.
pub fn enumerate_prunings(depth: usize) -> Result<Vec<Pruning>> {
    count_prunings(depth)?;
    Ok(prunings_below(NodeLabel::ROOT, depth)
        .into_iter()
        .map(Pruning::new)
        .collect())
}

fn prunings_below(node: NodeLabel, remaining: usize) -> Vec<Vec<NodeLabel>> {
    let mut out = vec![vec![node]];
    if remaining == 0 {
        return out;
    }
    let left = prunings_below(node.child(0).expect("depth capped"), remaining - 1);
    let right = prunings_below(node.child(1).expect("depth capped"), remaining - 1);
    for l in &left {
        for r in &right {
            let mut set = l.clone();
            set.extend_from_slice(r);
            out.push(set);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub depth: usize,
    /// Node regressor step size.
    pub beta: f64,
    /// Separator step size.
    pub eta: f64,
    /// Combiner step size.
    pub eta_combiner: f64,
    pub epsilon: f64,
    /// Regularizer of the separators' inverse matrices; `epsilon` when unset.
    #[serde(default)]
    pub separator_epsilon: Option<f64>,
    #[serde(default)]
    pub freeze_separators: bool,
    #[serde(default)]
    pub freeze_combiner: bool,
    #[serde(default)]
    pub init: SeparatorInit,
}

impl EnsembleConfig {
    pub fn new(depth: usize, beta: f64, eta: f64, eta_combiner: f64) -> Self {
        Self {
            depth,
            beta,
            eta,
            eta_combiner,
            epsilon: DEFAULT_EPSILON,
            separator_epsilon: None,
            freeze_separators: false,
            freeze_combiner: false,
            init: SeparatorInit::AxisAligned,
        }
    }

    pub fn separator_epsilon(&self) -> f64 {
        self.separator_epsilon.unwrap_or(self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub y_hat: f64,
    /// Estimate of each pruning, in enumeration order.
    pub model_estimates: Vec<f64>,
    /// `w_r' x` for every node, breadth-first.
    pub node_estimates: Vec<f64>,
    /// Root-to-node gate products, breadth-first.
    pub path_products: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleGradients {
    pub error: f64,
    pub nodes: Vec<Vec<f64>>,
    pub separators: Vec<Vec<f64>>,
    pub combiner: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    tree: TreeWork,
    phi: Vec<f64>,
    coverage: Vec<f64>,
    own: Vec<f64>,
    combiner_grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    depth: usize,
    dim: usize,
    separators: Vec<OnsState>,
    nodes: Vec<OnsState>,
    prunings: Vec<Pruning>,
    /// Heap indices of each pruning's members.
    members: Vec<Vec<usize>>,
    combiner: OnsState,
    freeze_separators: bool,
    freeze_combiner: bool,
    work: Workspace,
}

impl EnsembleModel {
    pub fn new(dim: usize, config: &EnsembleConfig) -> Result<Self> {
        let d = config.depth;
        if d == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must include the bias".into()));
        }
        validate_rate("beta", config.beta)?;
        validate_rate("eta", config.eta)?;
        validate_rate("eta_combiner", config.eta_combiner)?;
        let prunings = enumerate_prunings(d)?;
        let separators = internal_separators(d, dim, config.init, config.eta, config.separator_epsilon())?;
        let nodes = (0..(1usize << (d + 1)) - 1)
            .map(|_| OnsState::new(dim, config.beta, config.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let m = prunings.len();
        let combiner = OnsState::with_param(
            vec![1.0 / m as f64; m],
            config.eta_combiner,
            config.epsilon,
        )?;
        Ok(Self::assemble(
            d,
            dim,
            separators,
            nodes,
            prunings,
            combiner,
            config.freeze_separators,
            config.freeze_combiner,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        depth: usize,
        dim: usize,
        separators: Vec<OnsState>,
        nodes: Vec<OnsState>,
        prunings: Vec<Pruning>,
        combiner: OnsState,
        freeze_separators: bool,
        freeze_combiner: bool,
    ) -> Self {
        let members = prunings
            .iter()
            .map(|p| p.leaf_set().iter().map(|l| l.heap_index()).collect())
            .collect();
        let m = prunings.len();
        let work = Workspace {
            tree: TreeWork::new(depth, dim),
            phi: vec![0.0; m],
            coverage: vec![0.0; nodes.len()],
            own: vec![0.0; separators.len()],
            combiner_grad: vec![0.0; m],
        };
        Self {
            depth,
            dim,
            separators,
            nodes,
            prunings,
            members,
            combiner,
            freeze_separators,
            freeze_combiner,
            work,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn prunings(&self) -> &[Pruning] {
        &self.prunings
    }

    pub fn num_models(&self) -> usize {
        self.prunings.len()
    }

    pub fn combiner(&self) -> &OnsState {
        &self.combiner
    }

    pub fn combiner_mut(&mut self) -> &mut OnsState {
        &mut self.combiner
    }

    pub fn separators(&self) -> &[OnsState] {
        &self.separators
    }

    pub fn separators_mut(&mut self) -> &mut [OnsState] {
        &mut self.separators
    }

    /// Node regressors, breadth-first over all `2^(d+1) - 1` nodes.
    pub fn nodes(&self) -> &[OnsState] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [OnsState] {
        &mut self.nodes
    }

    pub fn separators_frozen(&self) -> bool {
        self.freeze_separators
    }

    pub fn set_freeze_separators(&mut self, freeze: bool) {
        self.freeze_separators = freeze;
    }

    pub fn set_freeze_combiner(&mut self, freeze: bool) {
        self.freeze_combiner = freeze;
    }

    fn forward(&self, x: &[f64], work: &mut Workspace) -> f64 {
        let tree = &mut work.tree;
        tree.descend(&self.separators, x);
        for (est, node) in tree.estimates.iter_mut().zip(&self.nodes) {
            *est = dot(node.param(), x);
        }
        let weights = self.combiner.param();
        work.coverage.iter_mut().for_each(|c| *c = 0.0);
        let mut y_hat = 0.0;
        for ((phi, members), &v) in work.phi.iter_mut().zip(&self.members).zip(weights) {
            let mut estimate = 0.0;
            for &r in members {
                estimate += tree.estimates[r] * tree.path[r];
                work.coverage[r] += v;
            }
            *phi = estimate;
            y_hat += v * estimate;
        }
        let internal = self.separators.len();
        for r in internal..self.nodes.len() {
            tree.subtree[r] = work.coverage[r] * tree.estimates[r];
        }
        for k in 0..internal {
            work.own[k] = work.coverage[k] * tree.estimates[k];
        }
        tree.ascend(Some(&work.own));
        y_hat
    }

    pub fn predict_detailed(&self, x: &[f64]) -> Result<EnsemblePrediction> {
        check_dim(self.dim, x.len())?;
        let mut work = self.work.clone();
        let y_hat = self.forward(x, &mut work);
        Ok(EnsemblePrediction {
            y_hat,
            model_estimates: work.phi,
            node_estimates: work.tree.estimates,
            path_products: work.tree.path,
        })
    }

    pub fn gradients(&self, x: &[f64], y: f64) -> Result<EnsembleGradients> {
        check_dim(self.dim, x.len())?;
        let mut work = self.work.clone();
        let error = y - self.forward(x, &mut work);
        let scale = |c: f64| x.iter().map(|v| c * v).collect::<Vec<_>>();
        Ok(EnsembleGradients {
            error,
            nodes: work
                .coverage
                .iter()
                .zip(&work.tree.path)
                .map(|(&c, &g)| scale(regressor_coefficient(error, c * g)))
                .collect(),
            separators: work
                .tree
                .alphas
                .iter()
                .zip(&work.tree.gates)
                .map(|(&a, &p)| scale(separator_coefficient(error, a, p)))
                .collect(),
            combiner: work.phi.iter().map(|&f| -2.0 * error * f).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let node_labels = (0..self.nodes.len()).map(|i| NodeLabel::from_heap_index(i).expect("valid"));
        let sep_labels =
            (0..self.separators.len()).map(|i| NodeLabel::from_heap_index(i).expect("valid"));
        let doc = EnsembleCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: "ensemble".into(),
            depth: self.depth,
            dim: self.dim,
            freeze_separators: self.freeze_separators,
            freeze_combiner: self.freeze_combiner,
            prunings: self.prunings.clone(),
            combiner: self.combiner.clone(),
            separators: labeled(sep_labels, &self.separators),
            nodes: labeled(node_labels, &self.nodes),
        };
        serde_json::to_string(&doc).expect("ensemble checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: EnsembleCheckpoint = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("bad checkpoint: {e}")))?;
        check_version(doc.version)?;
        if doc.kind != "ensemble" {
            return Err(Error::InvalidConfig(format!(
                "expected ensemble checkpoint, got {}",
                doc.kind
            )));
        }
        let d = doc.depth;
        let expected = enumerate_prunings(d)?;
        if d == 0 || doc.prunings != expected {
            return Err(Error::InvalidConfig(
                "pruning order does not match the canonical enumeration".into(),
            ));
        }
        check_dim(expected.len(), doc.combiner.dim())?;
        let separators = unlabel(doc.separators, (1 << d) - 1, doc.dim, |l| {
            (l.len() < d).then(|| l.heap_index())
        })?;
        let nodes = unlabel(doc.nodes, (1 << (d + 1)) - 1, doc.dim, |l| {
            (l.len() <= d).then(|| l.heap_index())
        })?;
        Ok(Self::assemble(
            d,
            doc.dim,
            separators,
            nodes,
            doc.prunings,
            doc.combiner,
            doc.freeze_separators,
            doc.freeze_combiner,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleCheckpoint {
    version: u32,
    kind: String,
    depth: usize,
    dim: usize,
    freeze_separators: bool,
    freeze_combiner: bool,
    prunings: Vec<Pruning>,
    combiner: OnsState,
    separators: Vec<LabeledState>,
    nodes: Vec<LabeledState>,
}

impl OnlineRegressor for EnsembleModel {
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
            || work.phi.iter().any(|v| !v.is_finite())
            || work.tree.alphas.iter().any(|a| !a.is_finite());
        if !skipped {
            let tree = &mut work.tree;
            for ((node, &c), &g) in self.nodes.iter_mut().zip(&work.coverage).zip(&tree.path) {
                node.step_scaled(regressor_coefficient(error, c * g), x, &mut tree.grad);
            }
            if !self.freeze_separators {
                for ((sep, &a), &p) in self.separators.iter_mut().zip(&tree.alphas).zip(&tree.gates) {
                    sep.step_scaled(separator_coefficient(error, a, p), x, &mut tree.grad);
                }
            }
            if !self.freeze_combiner {
                self.combiner
                    .step_scaled(-2.0 * error, &work.phi, &mut work.combiner_grad);
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
        Ok(work
            .coverage
            .iter()
            .zip(&work.tree.path)
            .flat_map(|(&c, &g)| x.iter().map(move |v| c * g * v))
            .collect())
    }

    fn regressor_params(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|r| r.param().to_vec()).collect()
    }

    fn separator_normals(&self) -> Vec<(String, Vec<f64>)> {
        self.separators
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let label = NodeLabel::from_heap_index(i).expect("valid");
                (label.to_string(), s.param().to_vec())
            })
            .collect()
    }
}
