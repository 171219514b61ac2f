//! Hyper-parameter search spaces for the tree learners.

use super::ensemble::{LearnerKind, MaxFeatures, TreeParams};
use crate::error::Result;
use crate::hpo::{get_cat, get_int, get_real, Assignment, ParamKind, ParamSpec, ParamValue, SearchSpace};

const MAX_FEATURES: [&str; 3] = ["all", "sqrt", "log2"];

fn max_features_choice(m: MaxFeatures, kind: LearnerKind) -> usize {
    match m {
        MaxFeatures::All => 0,
        MaxFeatures::Sqrt => 1,
        MaxFeatures::Log2 => 2,
        MaxFeatures::Auto => match kind {
            LearnerKind::RandomForest | LearnerKind::ExtraTrees => 1,
            _ => 0,
        },
        MaxFeatures::Fraction(_) | MaxFeatures::Count(_) => 0,
    }
}

/// Tuning space for `kind`; `max_estimators` bounds the ensemble size.
/// The decision tree's leaf cap is conditional on `cap_leaves = yes`.
pub fn learner_space(kind: LearnerKind, max_estimators: usize) -> Result<SearchSpace> {
    let max_estimators = max_estimators.max(10) as i64;
    let mut s = SearchSpace::default();
    if kind != LearnerKind::DecisionTree {
        s = s.int("n_estimators", 10.min(max_estimators), max_estimators, true)?;
    }
    s = match kind {
        LearnerKind::Gbdt => s
            .int("max_depth", 2, 12, false)?
            .real("learning_rate", 0.01, 1.0, true)?,
        _ => s
            .int("max_depth", 2, 64, true)?
            .int("min_samples_split", 2, 11, false)?
            .int("min_samples_leaf", 1, 11, false)?
            .categorical("max_features", &MAX_FEATURES)?,
    };
    if kind == LearnerKind::DecisionTree {
        s = s.categorical("cap_leaves", &["no", "yes"])?.conditional(
            ParamSpec {
                name: "max_leaf_nodes".into(),
                kind: ParamKind::Int {
                    low: 8,
                    high: 512,
                    log: true,
                },
                condition: None,
            },
            "cap_leaves",
            &["yes"],
        )?;
    }
    Ok(s)
}

pub fn params_from_assignment(kind: LearnerKind, a: &Assignment) -> TreeParams {
    let mut p = kind.default_params();
    if let Some(v) = get_int(a, "n_estimators") {
        p.n_estimators = v as usize;
    }
    if let Some(v) = get_int(a, "max_depth") {
        p.max_depth = v as usize;
    }
    if let Some(v) = get_int(a, "min_samples_split") {
        p.min_samples_split = v as usize;
    }
    if let Some(v) = get_int(a, "min_samples_leaf") {
        p.min_samples_leaf = v as usize;
    }
    if let Some(v) = get_real(a, "learning_rate") {
        p.learning_rate = v;
    }
    if let Some(c) = get_cat(a, "max_features") {
        p.max_features = [MaxFeatures::All, MaxFeatures::Sqrt, MaxFeatures::Log2][c];
    }
    p.max_leaf_nodes = get_int(a, "max_leaf_nodes").map(|v| v as usize);
    p
}

/// The assignment closest to `p` inside `learner_space(kind, ..)`, used to
/// seed tuning with the defaults.
pub fn params_to_assignment(kind: LearnerKind, p: &TreeParams, space: &SearchSpace) -> Assignment {
    let mut a = Assignment::new();
    for spec in space.params() {
        let value = match (spec.name.as_str(), &spec.kind) {
            ("n_estimators", ParamKind::Int { low, high, .. }) => {
                ParamValue::Int((p.n_estimators as i64).clamp(*low, *high))
            }
            ("max_depth", ParamKind::Int { low, high, .. }) => {
                ParamValue::Int((p.max_depth as i64).clamp(*low, *high))
            }
            ("min_samples_split", ParamKind::Int { low, high, .. }) => {
                ParamValue::Int((p.min_samples_split as i64).clamp(*low, *high))
            }
            ("min_samples_leaf", ParamKind::Int { low, high, .. }) => {
                ParamValue::Int((p.min_samples_leaf as i64).clamp(*low, *high))
            }
            ("learning_rate", ParamKind::Real { low, high, .. }) => {
                ParamValue::Real(p.learning_rate.clamp(*low, *high))
            }
            ("max_features", _) => ParamValue::Cat(max_features_choice(p.max_features, kind)),
            ("cap_leaves", _) => ParamValue::Cat(p.max_leaf_nodes.is_some() as usize),
            ("max_leaf_nodes", ParamKind::Int { low, high, .. }) => match p.max_leaf_nodes {
                Some(v) => ParamValue::Int((v as i64).clamp(*low, *high)),
                None => continue,
            },
            _ => continue,
        };
        a.insert(spec.name.clone(), value);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_spaces() {
        for kind in LearnerKind::ALL {
            let space = learner_space(kind, 150).unwrap();
            let a = params_to_assignment(kind, &kind.default_params(), &space);
            space.validate(&a).unwrap();
            let p = params_from_assignment(kind, &a);
            p.validate().unwrap();
            if kind != LearnerKind::DecisionTree {
                assert_eq!(p.n_estimators, 100);
            }
        }
        assert!(!learner_space(LearnerKind::DecisionTree, 10).unwrap().is_flat());
    }
}
