//! Cluster sampling of a raw dataset before training.

use super::config::SampleSettings;
use crate::error::Result;
use crate::ingest::LabeledDataset;
use crate::preprocess::{
    cluster_sample_indices, tune_k, zscore_fit_apply, KMeansOptions, TuneKOptions, DEFAULT_MINIBATCH,
};

/// Rows above which the k search uses mini-batch k-means.
const MINIBATCH_ROWS: usize = 50_000;

/// Clusters z-scored copies of the rows, picks k by silhouette and keeps
/// `settings.fraction` of every cluster. Returns the sample (raw features)
/// and the chosen k.
pub fn sample_dataset(d: &LabeledDataset, settings: &SampleSettings, seed: u64) -> Result<(LabeledDataset, usize)> {
    let (_, z) = zscore_fit_apply(&d.features)?;
    let opts = TuneKOptions {
        k_min: settings.k_min,
        k_max: settings.k_max.min(d.n_rows()),
        budget: settings.budget,
        seed,
        eval_rows: settings.eval_rows,
        kmeans: KMeansOptions {
            seed,
            minibatch_size: (d.n_rows() > MINIBATCH_ROWS).then_some(DEFAULT_MINIBATCH),
            ..KMeansOptions::default()
        },
        ..TuneKOptions::default()
    };
    let (k, model) = tune_k(&z, &opts)?;
    let keep = cluster_sample_indices(&z, &model, settings.fraction, seed)?;
    log::info!("cluster sampling: k = {k}, kept {} of {} rows", keep.len(), d.n_rows());
    Ok((d.subset(&keep), k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalcli::synth::synth_can;

    #[test]
    fn sample_keeps_a_fraction_of_every_cluster() {
        let d = synth_can(2_000, 1).unwrap();
        let settings = SampleSettings {
            fraction: 0.1,
            k_min: 2,
            k_max: 6,
            budget: 4,
            eval_rows: 500,
        };
        let (s, k) = sample_dataset(&d, &settings, 3).unwrap();
        assert!((2..=6).contains(&k));
        assert!(s.n_rows() >= 200 && s.n_rows() <= 200 + k);
        assert_eq!(s.feature_names, d.feature_names);
    }
}
