use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Dense feature matrix with integer-encoded labels and name registries.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Class indices treated as "attack"; every other class is normal traffic.
    pub attack_classes: Vec<usize>,
}

/// Class names that denote benign traffic in the supported datasets.
pub fn is_normal_name(name: &str) -> bool {
    name.eq_ignore_ascii_case("normal") || name.eq_ignore_ascii_case("benign")
}

impl LabeledDataset {
    /// Builds a dataset, deriving the attack set from the class names.
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let attack_classes = class_names
            .iter()
            .enumerate()
            .filter(|(_, n)| !is_normal_name(n))
            .map(|(i, _)| i)
            .collect();
        let d = Self {
            features,
            labels,
            feature_names,
            class_names,
            attack_classes,
        };
        d.validate()?;
        Ok(d)
    }

    /// Encodes string labels with a sorted class registry.
    pub fn from_string_labels(
        features: Matrix,
        labels: &[String],
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (class_names, encoded) = encode_labels(labels);
        Self::new(features, encoded, feature_names, class_names)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.rows() != self.labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if self.features.cols() != self.feature_names.len() {
            return Err(Error::Data(format!(
                "{} feature columns but {} feature names",
                self.features.cols(),
                self.feature_names.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::Data(format!(
                "label {bad} outside class registry of size {}",
                self.class_names.len()
            )));
        }
        check_unique(&self.feature_names, "feature")?;
        check_unique(&self.class_names, "class")?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// The (first) benign class, if any.
    pub fn normal_class(&self) -> Option<usize> {
        (0..self.n_classes()).find(|c| !self.attack_classes.contains(c))
    }

    pub fn is_attack(&self, class: usize) -> bool {
        self.attack_classes.binary_search(&class).is_ok()
    }

    /// Labels collapsed to 0 = normal, 1 = attack.
    pub fn binary_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|&l| usize::from(self.is_attack(l)))
            .collect()
    }

    /// Rows at `indices`, keeping the full class registry.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            attack_classes: self.attack_classes.clone(),
        }
    }

    pub fn select_features(&self, columns: &[usize]) -> Self {
        Self {
            features: self.features.select_cols(columns),
            labels: self.labels.clone(),
            feature_names: columns
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            class_names: self.class_names.clone(),
            attack_classes: self.attack_classes.clone(),
        }
    }

    /// Drops classes without rows and re-encodes labels against the
    /// remaining (still sorted) registry.
    pub fn compact_classes(&self) -> Self {
        let counts = self.class_counts();
        let mut remap = vec![usize::MAX; self.n_classes()];
        let mut class_names = Vec::new();
        let mut attack_classes = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            if n > 0 {
                remap[c] = class_names.len();
                if self.is_attack(c) {
                    attack_classes.push(class_names.len());
                }
                class_names.push(self.class_names[c].clone());
            }
        }
        Self {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&l| remap[l]).collect(),
            feature_names: self.feature_names.clone(),
            class_names,
            attack_classes,
        }
    }

    /// Appends the rows of `other`, merging class registries by name.
    pub fn concat(&self, other: &LabeledDataset) -> Result<Self> {
        if self.feature_names != other.feature_names {
            return Err(Error::Data(
                "cannot concatenate datasets with different feature sets".into(),
            ));
        }
        let mut names: BTreeSet<&str> = self.class_names.iter().map(String::as_str).collect();
        names.extend(other.class_names.iter().map(String::as_str));
        let class_names: Vec<String> = names.into_iter().map(str::to_owned).collect();
        let index: BTreeMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let relabel = |d: &LabeledDataset| -> Vec<usize> {
            d.labels
                .iter()
                .map(|&l| index[d.class_names[l].as_str()])
                .collect()
        };
        let mut labels = relabel(self);
        labels.extend(relabel(other));
        let attack: BTreeSet<usize> = self
            .attack_classes
            .iter()
            .map(|&c| index[self.class_names[c].as_str()])
            .chain(
                other
                    .attack_classes
                    .iter()
                    .map(|&c| index[other.class_names[c].as_str()]),
            )
            .collect();
        let d = Self {
            features: self.features.vstack(&other.features)?,
            labels,
            feature_names: self.feature_names.clone(),
            class_names,
            attack_classes: attack.into_iter().collect(),
        };
        d.validate()?;
        Ok(d)
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::Data(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

/// Sorted registry of distinct labels plus the encoded label vector.
pub fn encode_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let registry: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    let class_names: Vec<String> = registry.into_iter().map(str::to_owned).collect();
    let index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let encoded = labels.iter().map(|l| index[l.as_str()]).collect();
    (class_names, encoded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let labels: Vec<String> = ["BENIGN", "Bot", "BENIGN"].map(String::from).to_vec();
        LabeledDataset::from_string_labels(x, &labels, vec!["a".into()]).unwrap()
    }

    #[test]
    fn sorted_encoding() {
        let d = toy();
        assert_eq!(d.class_names, vec!["BENIGN", "Bot"]);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.attack_classes, vec![1]);
        assert_eq!(d.normal_class(), Some(0));
        assert_eq!(d.binary_labels(), vec![0, 1, 0]);
    }

    #[test]
    fn concat_merges_registries() {
        let a = toy();
        let x = Matrix::from_rows(&[[9.0]]).unwrap();
        let b = LabeledDataset::from_string_labels(x, &["DDoS".to_string()], vec!["a".into()])
            .unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.class_names, vec!["BENIGN", "Bot", "DDoS"]);
        assert_eq!(c.labels, vec![0, 1, 0, 2]);
        assert_eq!(c.attack_classes, vec![1, 2]);
    }

    #[test]
    fn compact_drops_empty_classes() {
        let d = toy().subset(&[0, 2]).compact_classes();
        assert_eq!(d.class_names, vec!["BENIGN"]);
        assert!(d.attack_classes.is_empty());
    }

    #[test]
    fn duplicate_feature_names_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let r = LabeledDataset::new(x, vec![0], vec!["a".into(), "a".into()], vec!["x".into()]);
        assert!(r.is_err());
    }
}
