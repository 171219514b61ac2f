//! Training-set preparation: k-means cluster sampling, SMOTE oversampling
//! and z-score normalization.

mod kmeans;
mod sampling;
mod smote;
mod zscore;

pub use kmeans::{
    kmeans_fit, silhouette, Distance, KMeansModel, KMeansOptions, DEFAULT_MINIBATCH,
};
pub use sampling::{cluster_sample, cluster_sample_indices, tune_k, TuneKOptions};
pub use smote::{interpolate, smote, SmoteConfig, SmoteReport};
pub use zscore::{zscore_apply, zscore_fit_apply, ZScoreScaler};
