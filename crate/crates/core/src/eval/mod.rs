//! Metrics, the learner x feature-selection backtest grid, forecasting and
//! the synthetic benchmark.

pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use metrics::{compute_metrics, Metrics};
pub use pipeline::{
    forecast_next, run_backtest, run_backtest_with_series, Estimator, GridLearner, LearnerParams, PipelineConfig,
    StackingConfig, TrainedModel, TrainedPipeline,
};
pub use report::{EvalReport, PredictionPoint, PredictionSeries, ReportMeta, ReportRow};
pub use synthetic::{generate_synthetic, Recipe, SyntheticConfig};
