//! Loading labeled datasets named on the command line.

use std::path::PathBuf;

use clap::Args;
use hybrid_ids::ingest::{load_can_files, load_flow_csv, sanitize, CanLabelPolicy, LabeledDataset};
use hybrid_ids::{Error, Result};

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Flow CSV with a `Label` column (repeatable; files are concatenated).
    #[arg(long = "flows", value_name = "CSV")]
    pub flows: Vec<PathBuf>,
    /// CAN log. `ATTACK=PATH` reads an R/T flag file whose injected frames
    /// belong to ATTACK; a bare PATH expects the class name as last token.
    #[arg(long = "can", value_name = "[ATTACK=]PATH")]
    pub can: Vec<String>,
}

fn can_source(spec: &str) -> (PathBuf, CanLabelPolicy) {
    match spec.split_once('=') {
        Some((attack, path)) if !attack.is_empty() => (PathBuf::from(path), CanLabelPolicy::attack_file(attack)),
        _ => (PathBuf::from(spec), CanLabelPolicy::LabelColumn),
    }
}

impl DataArgs {
    /// Loads, merges and sanitizes the inputs.
    pub fn load(&self) -> Result<LabeledDataset> {
        match (self.flows.is_empty(), self.can.is_empty()) {
            (true, true) => Err(Error::InvalidArgument("give --flows or --can input files".into())),
            (false, false) => Err(Error::InvalidArgument("--flows and --can cannot be mixed".into())),
            (false, true) => {
                let mut merged: Option<LabeledDataset> = None;
                for path in &self.flows {
                    let (d, r) = load_flow_csv(path)?;
                    log::info!(
                        "{}: {} rows accepted, {} rejected, {} non-finite cells",
                        path.display(),
                        r.rows_accepted,
                        r.rows_rejected,
                        r.non_finite_cells
                    );
                    merged = Some(match merged {
                        None => d,
                        Some(m) => m.concat(&d)?,
                    });
                }
                let (d, report) = sanitize(&merged.expect("at least one file"))?;
                if report.repaired_cells > 0 {
                    log::info!("repaired {} non-finite cells with column medians", report.repaired_cells);
                }
                if !report.constant_columns.is_empty() {
                    log::info!("constant columns: {}", report.constant_columns.join(", "));
                }
                Ok(d)
            }
            (true, false) => {
                let sources: Vec<(PathBuf, CanLabelPolicy)> = self.can.iter().map(|s| can_source(s)).collect();
                let (d, r) = load_can_files(&sources)?;
                log::info!(
                    "{} frames accepted, {} rejected (DLC {}, ID {})",
                    r.rows_accepted,
                    r.rejected(),
                    r.rejected_dlc,
                    r.rejected_id
                );
                Ok(d)
            }
        }
    }
}

pub fn class_table(d: &LabeledDataset) -> String {
    let width = d.class_names.iter().map(String::len).max().unwrap_or(5).max(5);
    let mut s = format!("{:width$}  rows\n", "class");
    for (name, n) in d.class_names.iter().zip(d.class_counts()) {
        s.push_str(&format!("{name:width$}  {n}\n"));
    }
    s.push_str(&format!("{} rows, {} features\n", d.n_rows(), d.n_features()));
    s
}
