//! Crowd-forecast laboratory: recalibrated weighted aggregation of forecast
//! streams, per-forecast feature construction, mutual-information
//! discretization, discrete Bayesian networks and penalized logistic
//! regression, evaluated with question-blocked cross-validation.
//!
//! The modules follow the data flow:
//!
//! * [`ingest`] parses tournament CSVs (or generates synthetic tournaments).
//! * [`aggregate`] computes the recalibrated consensus forecast at any instant.
//! * [`features`] builds the per-forecast predictor rows for tiers 1 to 4.
//! * [`discretize`] coalesces equal-interval bins while preserving pairwise MI.
//! * [`bayesnet`] learns, fits and queries discrete Bayesian networks.
//! * [`logreg`] fits unpenalized and L1/L2 penalized logistic models.
//! * [`eval`] runs cross-validation, AUC, diagnostics and report tables.
//! * [`pipeline`] wires the stages together for one configuration.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregate;
pub mod bayesnet;
pub mod discretize;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod logreg;
pub mod pipeline;
pub mod util;

pub use aggregate::{AggregateParams, ConsensusEngine, ConsensusSnapshot};
pub use bayesnet::{Dag, FittedBn};
pub use discretize::{DiscreteDataset, DiscretizationConfig};
pub use error::{Error, Result};
pub use eval::{EvalReport, FoldPlan, ModelFamily};
pub use features::{FeatureRow, FeatureTable, Predictor, TierDataset};
pub use ingest::{ForecastRecord, QuestionMeta, Tournament};
pub use logreg::{DesignMatrix, LogisticModel, Penalty};
