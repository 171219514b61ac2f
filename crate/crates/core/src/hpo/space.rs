//! Hyper-parameter search spaces with conditional (tree-structured) parameters.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Int { low: i64, high: i64, log: bool },
    Real { low: f64, high: f64, log: bool },
    Categorical { choices: Vec<String> },
}

/// The parameter is active only while `parent` (a categorical parameter)
/// takes one of `values` (choice indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(usize),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => write!(f, "#{v}"),
        }
    }
}

pub type Assignment = BTreeMap<String, ParamValue>;

/// Parameters in declaration order; a conditional parameter must be declared
/// after its parent, which rules out cycles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let mut space = SearchSpace::default();
        for p in params {
            space = space.with(p)?;
        }
        Ok(space)
    }

    pub fn with(mut self, p: ParamSpec) -> Result<Self> {
        if self.index_of(&p.name).is_some() {
            return Err(Error::InvalidArgument(format!(
                "parameter {:?} declared twice",
                p.name
            )));
        }
        match &p.kind {
            ParamKind::Int { low, high, log } => {
                if low > high || (*log && *low <= 0) {
                    return Err(bad_range(&p.name));
                }
            }
            ParamKind::Real { low, high, log } => {
                if !(low <= high) || !low.is_finite() || !high.is_finite() || (*log && *low <= 0.0)
                {
                    return Err(bad_range(&p.name));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(bad_range(&p.name));
                }
            }
        }
        if let Some(c) = &p.condition {
            let parent = self.index_of(&c.parent).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "parameter {:?} depends on {:?}, which must be declared first",
                    p.name, c.parent
                ))
            })?;
            match &self.params[parent].kind {
                ParamKind::Categorical { choices } => {
                    if c.values.is_empty() || c.values.iter().any(|&v| v >= choices.len()) {
                        return Err(Error::InvalidArgument(format!(
                            "condition on {:?} references invalid choices",
                            c.parent
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "condition parent {:?} must be categorical",
                        c.parent
                    )))
                }
            }
        }
        self.params.push(p);
        Ok(self)
    }

    pub fn int(self, name: &str, low: i64, high: i64, log: bool) -> Result<Self> {
        self.with(ParamSpec {
            name: name.into(),
            kind: ParamKind::Int { low, high, log },
            condition: None,
        })
    }

    pub fn real(self, name: &str, low: f64, high: f64, log: bool) -> Result<Self> {
        self.with(ParamSpec {
            name: name.into(),
            kind: ParamKind::Real { low, high, log },
            condition: None,
        })
    }

    pub fn categorical(self, name: &str, choices: &[&str]) -> Result<Self> {
        self.with(ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical {
                choices: choices.iter().map(|s| s.to_string()).collect(),
            },
            condition: None,
        })
    }

    /// Adds `spec` active only when categorical `parent` equals one of `when`.
    pub fn conditional(mut self, mut spec: ParamSpec, parent: &str, when: &[&str]) -> Result<Self> {
        let idx = self
            .index_of(parent)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parent {parent:?}")))?;
        let values = match &self.params[idx].kind {
            ParamKind::Categorical { choices } => when
                .iter()
                .map(|w| {
                    choices.iter().position(|c| c == w).ok_or_else(|| {
                        Error::InvalidArgument(format!("{parent:?} has no choice {w:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "condition parent {parent:?} must be categorical"
                )))
            }
        };
        spec.condition = Some(Condition {
            parent: parent.into(),
            values,
        });
        self = self.with(spec)?;
        Ok(self)
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn is_flat(&self) -> bool {
        self.params.iter().all(|p| p.condition.is_none())
    }

    /// Whether `p` is active given the values already in `a`.
    pub fn is_active(&self, p: &ParamSpec, a: &Assignment) -> bool {
        match &p.condition {
            None => true,
            Some(c) => matches!(a.get(&c.parent), Some(ParamValue::Cat(v)) if c.values.contains(v)),
        }
    }

    pub fn validate(&self, a: &Assignment) -> Result<()> {
        for p in &self.params {
            let active = self.is_active(p, a);
            match (active, a.get(&p.name)) {
                (true, None) => {
                    return Err(Error::InvalidArgument(format!(
                        "active parameter {:?} has no value",
                        p.name
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidArgument(format!(
                        "inactive parameter {:?} has a value",
                        p.name
                    )))
                }
                (false, None) => {}
                (true, Some(v)) => check_value(p, *v)?,
            }
        }
        if let Some(extra) = a.keys().find(|k| self.index_of(k).is_none()) {
            return Err(Error::InvalidArgument(format!("unknown parameter {extra:?}")));
        }
        Ok(())
    }

    /// Number of distinct assignments when every parameter is discrete and
    /// the count stays below `cap`.
    pub fn finite_size(&self, cap: usize) -> Option<usize> {
        if !self.is_flat() {
            return None;
        }
        let mut total: usize = 1;
        for p in &self.params {
            let n = match &p.kind {
                ParamKind::Int { low, high, .. } => (high - low + 1) as usize,
                ParamKind::Categorical { choices } => choices.len(),
                ParamKind::Real { low, high, .. } if low == high => 1,
                ParamKind::Real { .. } => return None,
            };
            total = total.checked_mul(n)?;
            if total > cap {
                return None;
            }
        }
        Some(total)
    }

    /// All assignments of a finite flat space, in lexicographic order.
    pub fn enumerate(&self) -> Vec<Assignment> {
        let mut out = vec![Assignment::new()];
        for p in &self.params {
            let values: Vec<ParamValue> = match &p.kind {
                ParamKind::Int { low, high, .. } => (*low..=*high).map(ParamValue::Int).collect(),
                ParamKind::Categorical { choices } => {
                    (0..choices.len()).map(ParamValue::Cat).collect()
                }
                ParamKind::Real { low, .. } => vec![ParamValue::Real(*low)],
            };
            out = out
                .into_iter()
                .flat_map(|a| {
                    values.iter().map(move |v| {
                        let mut b = a.clone();
                        b.insert(p.name.clone(), *v);
                        b
                    })
                })
                .collect();
        }
        out
    }

    /// Maps unit-cube coordinates (one per parameter, declaration order) to
    /// an assignment; inactive parameters are omitted.
    pub fn decode(&self, unit: &[f64]) -> Assignment {
        let mut a = Assignment::new();
        for (p, &u) in self.params.iter().zip(unit) {
            if !self.is_active(p, &a) {
                continue;
            }
            a.insert(p.name.clone(), decode_one(&p.kind, u.clamp(0.0, 1.0)));
        }
        a
    }

    /// Unit-cube coordinates of an assignment; inactive parameters map to 0.5.
    pub fn encode(&self, a: &Assignment) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| a.get(&p.name).map_or(0.5, |v| encode_one(&p.kind, *v)))
            .collect()
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Assignment {
        let unit: Vec<f64> = (0..self.len()).map(|_| rng.gen()).collect();
        self.decode(&unit)
    }
}

fn bad_range(name: &str) -> Error {
    Error::InvalidArgument(format!("parameter {name:?} has an empty or invalid range"))
}

fn check_value(p: &ParamSpec, v: ParamValue) -> Result<()> {
    let ok = match (&p.kind, v) {
        (ParamKind::Int { low, high, .. }, ParamValue::Int(x)) => (*low..=*high).contains(&x),
        (ParamKind::Real { low, high, .. }, ParamValue::Real(x)) => *low <= x && x <= *high,
        (ParamKind::Categorical { choices }, ParamValue::Cat(x)) => x < choices.len(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "value {v} invalid for parameter {:?}",
            p.name
        )))
    }
}

/// Continuous coordinate used by the surrogates (log-scaled when requested).
/// Integer ranges are widened by half a step on each side.
pub(crate) fn internal_bounds(kind: &ParamKind) -> (f64, f64) {
    match kind {
        ParamKind::Int { low, high, log } => {
            let (l, h) = (*low as f64 - 0.5, *high as f64 + 0.5);
            if *log {
                (l.max(0.5).ln(), h.ln())
            } else {
                (l, h)
            }
        }
        ParamKind::Real { low, high, log } => {
            if *log {
                (low.ln(), high.ln())
            } else {
                (*low, *high)
            }
        }
        ParamKind::Categorical { choices } => (0.0, choices.len() as f64),
    }
}

pub(crate) fn to_internal(kind: &ParamKind, v: ParamValue) -> f64 {
    match (kind, v) {
        (ParamKind::Int { log: true, .. }, ParamValue::Int(x)) => (x as f64).ln(),
        (ParamKind::Int { .. }, ParamValue::Int(x)) => x as f64,
        (ParamKind::Real { log: true, .. }, ParamValue::Real(x)) => x.ln(),
        (ParamKind::Real { .. }, ParamValue::Real(x)) => x,
        (_, ParamValue::Cat(c)) => c as f64,
        (_, ParamValue::Int(x)) => x as f64,
        (_, ParamValue::Real(x)) => x,
    }
}

pub(crate) fn from_internal(kind: &ParamKind, t: f64) -> ParamValue {
    match kind {
        ParamKind::Int { low, high, log } => {
            let raw = if *log { t.exp() } else { t };
            ParamValue::Int((raw.round() as i64).clamp(*low, *high))
        }
        ParamKind::Real { low, high, log } => {
            let raw = if *log { t.exp() } else { t };
            ParamValue::Real(raw.clamp(*low, *high))
        }
        ParamKind::Categorical { choices } => {
            ParamValue::Cat((t.floor().max(0.0) as usize).min(choices.len() - 1))
        }
    }
}

fn decode_one(kind: &ParamKind, u: f64) -> ParamValue {
    let (lo, hi) = internal_bounds(kind);
    from_internal(kind, lo + u * (hi - lo))
}

fn encode_one(kind: &ParamKind, v: ParamValue) -> f64 {
    let (lo, hi) = internal_bounds(kind);
    let t = match (kind, v) {
        (ParamKind::Categorical { .. }, ParamValue::Cat(c)) => c as f64 + 0.5,
        _ => to_internal(kind, v),
    };
    if hi > lo {
        ((t - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn get_int(a: &Assignment, name: &str) -> Option<i64> {
    match a.get(name) {
        Some(ParamValue::Int(v)) => Some(*v),
        _ => None,
    }
}

pub fn get_real(a: &Assignment, name: &str) -> Option<f64> {
    match a.get(name) {
        Some(ParamValue::Real(v)) => Some(*v),
        _ => None,
    }
}

pub fn get_cat(a: &Assignment, name: &str) -> Option<usize> {
    match a.get(name) {
        Some(ParamValue::Cat(v)) => Some(*v),
        _ => None,
    }
}

/// `name=value;...` rendering used in ledgers and logs.
pub fn format_assignment(space: &SearchSpace, a: &Assignment) -> String {
    space
        .params()
        .iter()
        .filter_map(|p| {
            a.get(&p.name).map(|v| match (&p.kind, v) {
                (ParamKind::Categorical { choices }, ParamValue::Cat(c)) => {
                    format!("{}={}", p.name, choices[*c])
                }
                _ => format!("{}={v}", p.name),
            })
        })
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn tree_space() -> SearchSpace {
        SearchSpace::default()
            .int("depth", 1, 30, false)
            .unwrap()
            .real("lr", 1e-3, 1.0, true)
            .unwrap()
            .categorical("cap", &["no", "yes"])
            .unwrap()
            .conditional(
                ParamSpec {
                    name: "leaves".into(),
                    kind: ParamKind::Int {
                        low: 8,
                        high: 512,
                        log: true,
                    },
                    condition: None,
                },
                "cap",
                &["yes"],
            )
            .unwrap()
    }

    #[test]
    fn rejects_bad_declarations() {
        assert!(SearchSpace::default().int("a", 3, 2, false).is_err());
        assert!(SearchSpace::default().real("a", 0.0, 1.0, true).is_err());
        assert!(SearchSpace::default().categorical("a", &[]).is_err());
        let forward = ParamSpec {
            name: "child".into(),
            kind: ParamKind::Int {
                low: 0,
                high: 1,
                log: false,
            },
            condition: Some(Condition {
                parent: "later".into(),
                values: vec![0],
            }),
        };
        assert!(SearchSpace::new(vec![forward]).is_err());
        assert!(SearchSpace::default()
            .int("a", 0, 1, false)
            .unwrap()
            .int("a", 0, 1, false)
            .is_err());
    }

    #[test]
    fn validate_checks_activity() {
        let s = tree_space();
        let mut a = Assignment::new();
        a.insert("depth".into(), ParamValue::Int(5));
        a.insert("lr".into(), ParamValue::Real(0.1));
        a.insert("cap".into(), ParamValue::Cat(0));
        s.validate(&a).unwrap();
        a.insert("leaves".into(), ParamValue::Int(16));
        assert!(s.validate(&a).is_err());
        a.insert("cap".into(), ParamValue::Cat(1));
        s.validate(&a).unwrap();
        a.insert("depth".into(), ParamValue::Int(31));
        assert!(s.validate(&a).is_err());
    }

    #[test]
    fn enumerates_finite_space() {
        let s = SearchSpace::default()
            .int("k", 2, 4, false)
            .unwrap()
            .categorical("d", &["e", "m"])
            .unwrap();
        assert_eq!(s.finite_size(100), Some(6));
        assert_eq!(s.enumerate().len(), 6);
        assert_eq!(s.finite_size(5), None);
        assert_eq!(tree_space().finite_size(1000), None);
    }

    proptest! {
        #[test]
        fn decoded_points_validate(seed in 0u64..500, lo in -50i64..50, span in 0i64..100,
                                   rlo in 0.001f64..10.0, rspan in 0.0f64..100.0) {
            let s = SearchSpace::default()
                .int("i", lo, lo + span, false).unwrap()
                .int("j", 1, 1 + span, true).unwrap()
                .real("r", rlo, rlo + rspan, seed % 2 == 0).unwrap()
                .categorical("c", &["a", "b", "c"]).unwrap()
                .conditional(ParamSpec { name: "x".into(),
                    kind: ParamKind::Real { low: -1.0, high: 1.0, log: false }, condition: None },
                    "c", &["b", "c"]).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let a = s.sample_uniform(&mut rng);
                prop_assert!(s.validate(&a).is_ok(), "{:?}", a);
                let back = s.decode(&s.encode(&a));
                prop_assert_eq!(back.keys().collect::<Vec<_>>(), a.keys().collect::<Vec<_>>());
            }
        }
    }
}
