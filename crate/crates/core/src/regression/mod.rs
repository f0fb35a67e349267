//! End-to-end IB-UQ function regression: training, Monte Carlo prediction,
//! error metrics and the information-plane sweep.

mod metrics;
mod model;
mod sweep;

pub use metrics::{
    benchmark_report, read_metrics_csv, rl2e, write_metrics_csv, write_prediction_csv,
    BenchmarkReport,
};
pub(crate) use model::{read_schedule, write_schedule};
pub use model::{
    train_regression, train_regression_with, RegressionConfig, RegressionModel, Standardizer,
    TrainRecord, TrainedRegression,
};
pub use sweep::{info_plane_sweep, select_best, sweep_with, write_sweep_csv, SweepRow};
