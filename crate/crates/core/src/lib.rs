//! Online piecewise-linear regression over softly partitioned regressor spaces.
//!
//! Three predictors share one numerical kernel ([`second_order`]):
//!
//! - [`sp::SpModel`]: `K` separators each cutting the whole space, one
//!   regressor per sign pattern.
//! - [`fmp::FmpModel`]: a depth-`d` tree of separators with regressors at the
//!   `2^d` leaves.
//! - [`ensemble::EnsembleModel`]: every pruning of a depth-`d` tree combined
//!   linearly, with shared node regressors.
//!
//! Region boundaries and regressors are all trained with Online Newton Steps
//! using per-parameter inverse second-order matrices updated by
//! Sherman–Morrison. Models consume augmented features (raw features followed
//! by a constant 1) and follow a strict predict-then-update discipline.

pub mod ensemble;
pub mod error;
pub mod fmp;
pub mod labels;
pub mod linear;
pub mod model;
pub mod rng;
pub mod second_order;
pub mod sp;
pub mod synth;

pub use ensemble::{count_prunings, enumerate_prunings, EnsembleConfig, EnsembleModel, Pruning};
pub use error::{Error, Result};
pub use fmp::{FmpConfig, FmpModel};
pub use labels::NodeLabel;
pub use linear::LinearOns;
pub use model::{OnlineRegressor, SeparatorInit, StepReport};
pub use second_order::{augment, gate, gate_grad, sherman_morrison_update, AugmentedSample, GateValue, InverseHessian, OnsState};
pub use sp::{sp_max_regions, SpConfig, SpModel};
pub use synth::{GeneratorKind, GeneratorSpec, Sample};
