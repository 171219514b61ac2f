//! Metrics, evaluation protocols, benchmarking, configuration files and
//! synthetic data.

mod bench;
mod config;
mod metrics;
mod protocols;
mod sample;
pub mod synth;

pub use bench::{bench_latency, BenchReport, StageStats};
pub use config::{RunConfig, SampleSettings};
pub use metrics::{average_reports, compute_metrics, macro_f1, ClassScores, MetricsReport};
pub use protocols::{cross_validate, zero_day_eval, zero_day_split, CvReport, ZeroDayReport};
pub use sample::sample_dataset;
