//! IG ranking with a cumulative-importance cutoff, then FCBF redundancy removal.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::info::{discretize, information_gain_discrete, symmetrical_uncertainty_discrete, BinningRule};
use crate::error::{Error, Result};
use crate::ingest::LabeledDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    /// Normalized IG per original feature (sums to 1, or uniform when all
    /// gains are zero).
    pub importances: Vec<f64>,
    /// Retained original indices, most important first.
    pub selected: Vec<usize>,
    pub alpha_ig: f64,
    pub alpha_su: f64,
    pub feature_names: Vec<String>,
}

impl FeatureSelection {
    /// Indices of every feature ranked by importance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        rank(&self.importances)
    }

    pub fn selected_names(&self) -> Vec<&str> {
        self.selected
            .iter()
            .map(|&i| self.feature_names[i].as_str())
            .collect()
    }

    /// One selected feature name per line, in importance order.
    pub fn write_name_list<W: Write>(&self, mut out: W) -> Result<()> {
        for name in self.selected_names() {
            writeln!(out, "{name}").map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(())
    }

    pub fn save_name_list(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_name_list(std::io::BufWriter::new(f))
    }

    pub fn apply(&self, d: &LabeledDataset) -> Result<LabeledDataset> {
        if d.n_features() != self.importances.len() {
            return Err(Error::WidthMismatch {
                context: "feature selection",
                expected: self.importances.len(),
                actual: d.n_features(),
            });
        }
        Ok(d.select_features(&self.selected))
    }
}

fn rank(importances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    order
}

/// Ranks features by normalized information gain and keeps the top ones
/// until their cumulative importance reaches `alpha_ig`.
pub fn ig_select(
    d: &LabeledDataset,
    alpha_ig: f64,
    binning: BinningRule,
) -> Result<FeatureSelection> {
    if !(alpha_ig > 0.0 && alpha_ig <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_ig {alpha_ig} outside (0, 1]"
        )));
    }
    let f = d.n_features();
    if f == 0 {
        return Err(Error::Data("dataset has no features".into()));
    }
    let gains: Vec<f64> = (0..f)
        .into_par_iter()
        .map(|j| information_gain_discrete(&discretize(&d.features.column(j), binning), &d.labels))
        .collect();
    let total: f64 = gains.iter().sum();
    if total <= 0.0 {
        log::warn!("every feature has zero information gain; keeping all {f}");
        return Ok(FeatureSelection {
            importances: vec![1.0 / f as f64; f],
            selected: (0..f).collect(),
            alpha_ig,
            alpha_su: 0.9,
            feature_names: d.feature_names.clone(),
        });
    }
    let importances: Vec<f64> = gains.iter().map(|g| g / total).collect();
    let mut selected = Vec::new();
    let mut cumulative = 0.0;
    for j in rank(&importances) {
        if importances[j] <= 0.0 || cumulative >= alpha_ig - 1e-12 {
            break;
        }
        cumulative += importances[j];
        selected.push(j);
    }
    log::info!(
        "IG kept {} of {f} features (cumulative importance {cumulative:.4})",
        selected.len()
    );
    Ok(FeatureSelection {
        importances,
        selected,
        alpha_ig,
        alpha_su: 0.9,
        feature_names: d.feature_names.clone(),
    })
}

/// Drops the less important member of every retained pair whose symmetrical
/// uncertainty exceeds `alpha_su`.
pub fn fcbf_filter(
    d: &LabeledDataset,
    sel: &FeatureSelection,
    alpha_su: f64,
    binning: BinningRule,
) -> Result<FeatureSelection> {
    if !(alpha_su > 0.0 && alpha_su < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_su {alpha_su} outside (0, 1)"
        )));
    }
    let codes: Vec<Vec<usize>> = sel
        .selected
        .par_iter()
        .map(|&j| discretize(&d.features.column(j), binning))
        .collect();
    let n = sel.selected.len();
    let mut keep = vec![true; n];
    // Each surviving pair is checked when its stronger member is visited, so
    // one ordered pass leaves every retained pair at or below the threshold.
    for i in 0..n {
        if !keep[i] {
            continue;
        }
        let redundant: Vec<usize> = (i + 1..n)
            .into_par_iter()
            .filter(|&j| keep[j] && symmetrical_uncertainty_discrete(&codes[i], &codes[j]) > alpha_su)
            .collect();
        for j in redundant {
            log::debug!(
                "FCBF drops {:?} (redundant with {:?})",
                d.feature_names[sel.selected[j]],
                d.feature_names[sel.selected[i]]
            );
            keep[j] = false;
        }
    }
    let selected = sel
        .selected
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&j, _)| j)
        .collect();
    Ok(FeatureSelection {
        selected,
        alpha_su,
        ..sel.clone()
    })
}
