//! Feature engineering: information-gain ranking, FCBF redundancy removal and
//! kernel PCA.

mod info;
mod kpca;
mod select;

pub use info::{
    discretize, entropy, information_gain, information_gain_discrete, joint_entropy,
    symmetrical_uncertainty, symmetrical_uncertainty_discrete, BinningRule,
};
pub use kpca::{kpca_fit, kpca_fitted_projection, kpca_transform, Kernel, KpcaModel};
pub use select::{fcbf_filter, ig_select, FeatureSelection};
