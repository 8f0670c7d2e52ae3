//! Greedy active learning for logistic classification: subjects are queried
//! in batches by a two-stage uncertainty and D-efficiency rule, and variables
//! enter one at a time by grafting until a relative D-deficiency test stops
//! the run.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix `f64`, with `F32`-suffixed twins for single precision.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod design;
pub mod driver;
pub mod grafting;
pub mod linalg;
pub mod logistic;
pub mod metrics;
pub mod query;
pub mod scalar;

pub use data::{
    gen_synthetic, initial_split, load_csv, stream_rng, CaseId, CsvSchema, DataError,
    DatasetManifest, InterceptPolicy, LabelOracle, MeanMode, SplitSpec, Stream, SyntheticConfig,
};
pub use design::{re_d_efficiency, score_candidates, DesignError, ScoreRoute};
pub use driver::{
    run_baseline_full, run_baseline_random_full, run_baseline_random_selected, run_gate, Approach,
    ClassMetrics, DriverError, Termination, VariableOutcome,
};
pub use grafting::{evaluate_stop, gradient_scores, select_variable, GraftError};
pub use linalg::{cholesky, LinalgError};
pub use logistic::{fit_irls, ModelError, RIDGE_LADDER};
pub use metrics::{
    accuracy, aggregate, roc_auc, selection_quality, MetricsError, RocCurve, SelectionQuality,
};
pub use query::{candidate_set, query_batch, query_step, uncertainty_distances, QueryError};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
pub type Model = logistic::LogisticModel<f64>;
pub type IrlsControls = logistic::IrlsControls<f64>;
pub type FitReport = logistic::FitReport<f64>;
pub type DesignState = design::DesignState<f64>;
pub type DataPool = data::DataPool<f64>;
pub type TrueModelSpec = data::TrueModelSpec<f64>;
pub type GateConfig = driver::GateConfig<f64>;
pub type RunResult = driver::RunResult<f64>;
pub type IterationRecord = driver::IterationRecord<f64>;
pub type BatchTrace = query::BatchTrace<f64>;
pub type StopDecision = grafting::StopDecision<f64>;

pub type MatrixF32 = linalg::Matrix<f32>;
pub type ModelF32 = logistic::LogisticModel<f32>;
pub type DataPoolF32 = data::DataPool<f32>;
pub type GateConfigF32 = driver::GateConfig<f32>;
pub type RunResultF32 = driver::RunResult<f32>;
