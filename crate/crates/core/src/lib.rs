//! Online aggregation of recursive predictors for time-varying
//! autoregressive processes.
//!
//! * [`tvar`]: simulation and stability analysis of TVAR processes.
//! * [`predictors`]: NLMS predictors and the step-size bank.
//! * [`aggregation`]: exponentially weighted aggregation and learning rates.
//! * [`evaluation`]: shifted losses, Monte Carlo replications and inequality
//!   checks.
//! * [`certify`], [`bench`]: the property suites and timing harness used by
//!   the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod bench;
pub mod certify;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod predictors;
pub mod tvar;

pub use aggregation::{Aggregator, EtaCase, ModelConstants, Strategy};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use evaluation::{Experiment, LossReport};
pub use predictors::{NlmsPredictor, Predictor};
pub use tvar::{InnovationSpec, TvarParams};
