//! Experiment harness for the treeons predictors.
//!
//! Streams samples from CSV files or synthetic generators through a model in
//! strict predict-then-update order, records per-step squared error, the
//! normalized accumulated error `(1/t) sum e^2`, optional regret against the
//! best fixed comparator in hindsight, and per-step timing.

pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod oracle;
pub mod output;
pub mod regret;
pub mod runner;
pub mod scale;
pub mod sweep;
pub mod timing;

pub use config::{Algorithm, DataSource, ExperimentConfig, Rates, ScaleMode, SyntheticSource};
pub use data::{load_csv, Dataset};
pub use error::{BenchError, Result};
pub use model::AnyModel;
pub use oracle::{hindsight_oracle, HindsightOracle, OracleFit};
pub use regret::{regret_check, RegretOracleConfig, RegretReport};
pub use runner::{run_experiment, run_stream, RunMetrics, RunOptions};
pub use scale::{minmax_scale, MinMaxScaler};
pub use timing::{timing_profile, ProfileCase, ProfileRow, ProfileSettings};
