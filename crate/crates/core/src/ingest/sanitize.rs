use crate::error::{Error, Result};
use crate::ingest::dataset::{encode_labels, LabeledDataset};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SanitizeReport {
    pub repaired_cells: usize,
    /// Columns whose values are all identical; kept, only reported.
    pub constant_columns: Vec<String>,
}

/// Median of the finite entries, `None` when there are none.
pub fn finite_median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Repairs non-finite cells with the column median of its finite cells and
/// re-encodes labels against a sorted registry of the classes present.
pub fn sanitize(d: &LabeledDataset) -> Result<(LabeledDataset, SanitizeReport)> {
    let mut features = d.features.clone();
    let mut report = SanitizeReport::default();
    for j in 0..features.cols() {
        let col = features.column(j);
        if col.iter().any(|v| !v.is_finite()) {
            let median = finite_median(&col).ok_or_else(|| {
                Error::Data(format!(
                    "column {:?} has no finite entries",
                    d.feature_names[j]
                ))
            })?;
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    features.set(i, j, median);
                    report.repaired_cells += 1;
                }
            }
        }
        let first = features.get(0, j);
        if (0..features.rows()).all(|i| features.get(i, j) == first) {
            report.constant_columns.push(d.feature_names[j].clone());
        }
    }
    if !report.constant_columns.is_empty() {
        log::info!("constant columns: {}", report.constant_columns.join(", "));
    }

    let names: Vec<String> = d.labels.iter().map(|&l| d.class_names[l].clone()).collect();
    let (class_names, labels) = encode_labels(&names);
    let attack_classes = class_names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            d.class_index(n)
                .map(|c| d.is_attack(c))
                .unwrap_or(false)
        })
        .map(|(i, _)| i)
        .collect();
    let out = LabeledDataset {
        features,
        labels,
        feature_names: d.feature_names.clone(),
        class_names,
        attack_classes,
    };
    out.validate()?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn ds(col: &[f64], labels: &[&str]) -> LabeledDataset {
        let x = Matrix::column_vector(col);
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        LabeledDataset::from_string_labels(x, &labels, vec!["f".into()]).unwrap()
    }

    #[test]
    fn repairs_with_median() {
        let d = ds(&[1.0, f64::INFINITY, 3.0], &["a", "a", "b"]);
        let (s, r) = sanitize(&d).unwrap();
        assert_eq!(s.features.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(r.repaired_cells, 1);
    }

    #[test]
    fn finite_dataset_unchanged() {
        let d = ds(&[1.0, 5.0, 3.0], &["BENIGN", "Bot", "BENIGN"]);
        let (s, r) = sanitize(&d).unwrap();
        assert_eq!(s, d);
        assert_eq!(r.repaired_cells, 0);
    }

    #[test]
    fn all_non_finite_column_is_fatal() {
        let d = ds(&[f64::NAN, f64::INFINITY], &["a", "a"]);
        let err = sanitize(&d).unwrap_err().to_string();
        assert!(err.contains("\"f\""), "{err}");
    }

    #[test]
    fn constant_columns_reported() {
        let d = ds(&[5.0, 5.0, 5.0], &["a", "b", "a"]);
        let (_, r) = sanitize(&d).unwrap();
        assert_eq!(r.constant_columns, vec!["f"]);
    }

    #[test]
    fn re_encodes_sorted() {
        // registry deliberately out of order
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
        let d = LabeledDataset::new(
            x,
            vec![0, 1, 0],
            vec!["f".into()],
            vec!["Bot".into(), "BENIGN".into()],
        )
        .unwrap();
        let (s, _) = sanitize(&d).unwrap();
        assert_eq!(s.class_names, vec!["BENIGN", "Bot"]);
        assert_eq!(s.labels, vec![1, 0, 1]);
        assert_eq!(s.attack_classes, vec![1]);
    }

    #[test]
    fn idempotent() {
        let d = ds(&[1.0, f64::NAN, 7.0, f64::NEG_INFINITY], &["x", "y", "x", "z"]);
        let (once, _) = sanitize(&d).unwrap();
        let (twice, _) = sanitize(&once).unwrap();
        assert_eq!(once, twice);
    }
}
