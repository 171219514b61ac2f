//! The four-tier detector: stacked signature learners, cluster-labeling
//! k-means and biased classifiers, plus model persistence.

mod anomaly;
mod config;
mod persist;
mod pipeline;
mod stack;

pub use anomaly::{
    cluster_assign, cluster_label_accuracy, label_clusters, train_anomaly_tier, AnomalyDecision,
    AnomalyModel, AnomalyReport, ClusterAssignment, ClusterLabelModel,
};
pub use config::{
    AnomalySettings, FeatureSettings, KpcaSettings, PipelineConfig, SignatureSettings,
    SmoteSettings,
};
pub use persist::{load_pipeline, pipeline_from_bytes, pipeline_to_bytes, save_pipeline, MAGIC};
pub use pipeline::{
    train_pipeline, train_pipeline_observed, DetectOptions, PipelineModel, StageTimes,
    TrainReport, TrainStage, Verdict, VerdictKind, FORMAT_VERSION, TRACE_BIASED, TRACE_CLUSTER,
    TRACE_SIGNATURE,
};
pub use stack::{
    capped_rows, cv_macro_f1, train_signature_tier, tune_learner, BaseReport, OofAudit,
    SignatureReport, StackedModel,
};
