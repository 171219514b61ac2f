//! Multi-tier hybrid intrusion detection.
//!
//! A stacked ensemble of tree learners flags known attack classes; traffic it
//! considers normal is re-examined by a cluster-labeling k-means tier with two
//! biased classifiers that catch previously unseen attacks.

pub mod detect;
pub mod error;
pub mod evalcli;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod hpo;
pub mod matrix;
pub mod preprocess;

pub use error::{Error, Result};
pub use matrix::Matrix;
