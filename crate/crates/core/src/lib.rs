//! Credit-spread forecasting toolkit.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`data`] ingests monthly macroeconomic CSVs, aligns them on a monthly
//!    calendar, derives first differences and fills gaps.
//! 2. [`info`] ranks candidate features by their mutual information with the
//!    spread and keeps the top `k`.
//! 3. [`preprocess`] adds a trailing average of the spread with an
//!    MSE-optimal window and PCA-whitens the design matrix.
//! 4. [`learners`] and [`stacking`] fit the base regressors and the
//!    kernel-ridge meta-learner on top of them.
//! 5. [`eval`] scores everything on a chronological split and produces
//!    forecasts.

pub mod data;
pub mod error;
pub mod eval;
pub mod info;
pub mod learners;
pub mod preprocess;
pub mod seed;
pub mod stacking;

pub use data::{Dataset, Month, SeriesTable, SplitSpec};
pub use error::{Error, Result};
pub use eval::{
    compute_metrics, forecast_next, generate_synthetic, run_backtest, run_backtest_with_series, EvalReport,
    GridLearner, Metrics, PipelineConfig, Recipe, StackingConfig, SyntheticConfig, TrainedPipeline,
};
pub use info::{FeatureRanking, MiEstimate};
pub use learners::{FittedRegressor, LearnerKind, RegressorSpec};
pub use preprocess::{WhiteningTransform, WindowChoice};
pub use stacking::{StackedModel, StackingMode};
