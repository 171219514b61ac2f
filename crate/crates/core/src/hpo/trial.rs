use std::io::Write;

use super::space::{format_assignment, Assignment, SearchSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub assignment: Assignment,
    /// Raw objective; NaN when the evaluation failed.
    pub objective: f64,
    pub failed: bool,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialLedger {
    trials: Vec<Trial>,
}

impl TrialLedger {
    pub fn push(&mut self, assignment: Assignment, objective: f64, failed: bool, wall: f64) {
        let index = self.trials.len();
        self.trials.push(Trial {
            index,
            assignment,
            objective,
            failed,
            wall_time_secs: wall,
        });
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Objectives with failed trials imputed at the worst successful value
    /// (0 when nothing has succeeded yet).
    pub fn imputed_objectives(&self) -> Vec<f64> {
        let worst = self
            .trials
            .iter()
            .filter(|t| !t.failed)
            .map(|t| t.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let worst = if worst.is_finite() { worst } else { 0.0 };
        self.trials
            .iter()
            .map(|t| if t.failed { worst } else { t.objective })
            .collect()
    }

    /// Lowest successful objective; the earliest trial wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| !t.failed)
            .fold(None, |acc: Option<&Trial>, t| match acc {
                Some(b) if b.objective <= t.objective => Some(b),
                _ => Some(t),
            })
    }

    /// Best objective seen after each trial (infinite before any success).
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if !t.failed && t.objective < best {
                    best = t.objective;
                }
                best
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, space: &SearchSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Format(format!("ledger export: {e}"));
        w.write_record(["index", "assignment", "objective", "failed", "wall_time_secs"])
            .map_err(to_err)?;
        for t in &self.trials {
            w.write_record([
                t.index.to_string(),
                format_assignment(space, &t.assignment),
                t.objective.to_string(),
                t.failed.to_string(),
                format!("{:.6}", t.wall_time_secs),
            ])
            .map_err(to_err)?;
        }
        w.flush()
            .map_err(|e| Error::Format(format!("ledger export: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoOutcome {
    pub best: Trial,
    pub ledger: TrialLedger,
}

impl HpoOutcome {
    pub(crate) fn from_ledger(ledger: TrialLedger) -> Result<Self> {
        let best = ledger
            .best()
            .cloned()
            .ok_or_else(|| Error::Data("every optimization trial failed".into()))?;
        Ok(Self { best, ledger })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::ParamValue;

    fn a(v: i64) -> Assignment {
        let mut m = Assignment::new();
        m.insert("k".into(), ParamValue::Int(v));
        m
    }

    #[test]
    fn imputation_and_incumbent() {
        let mut l = TrialLedger::default();
        l.push(a(1), f64::NAN, true, 0.0);
        l.push(a(2), 3.0, false, 0.0);
        l.push(a(3), 5.0, false, 0.0);
        l.push(a(4), f64::NAN, true, 0.0);
        l.push(a(5), 3.0, false, 0.0);
        assert_eq!(l.imputed_objectives(), vec![5.0, 3.0, 5.0, 5.0, 3.0]);
        assert_eq!(l.best().unwrap().index, 1);
        assert_eq!(
            l.incumbent_trace(),
            vec![f64::INFINITY, 3.0, 3.0, 3.0, 3.0]
        );
    }

    #[test]
    fn csv_export() {
        let space = SearchSpace::default().int("k", 1, 9, false).unwrap();
        let mut l = TrialLedger::default();
        l.push(a(2), 0.5, false, 0.25);
        let mut buf = Vec::new();
        l.write_csv(&space, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "index,assignment,objective,failed,wall_time_secs\n0,k=2,0.5,false,0.250000\n"
        );
    }
}
