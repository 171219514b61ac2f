//! Flow-feature CSV files (one header row, one `Label` column) and the
//! canonical export format, which is the same layout with the label last.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::dataset::LabeledDataset;
use crate::matrix::Matrix;

pub const LABEL_COLUMN: &str = "Label";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowLoadReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    /// Rows dropped because a feature cell was not numeric.
    pub rows_rejected: usize,
    /// Cells holding `Infinity`, `-Infinity` or `NaN`, left for sanitize.
    pub non_finite_cells: usize,
}

/// Parses one feature cell. The three non-finite tokens are matched
/// case-sensitively; any other non-numeric text is `None`.
pub fn parse_flow_cell(tok: &str) -> Option<f64> {
    match tok {
        "Infinity" => Some(f64::INFINITY),
        "-Infinity" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ => tok.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// Trims header names and disambiguates repeats with a `.N` suffix.
fn normalize_header(raw: &csv::StringRecord) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    raw.iter()
        .map(|h| {
            let name = h.trim().to_owned();
            let n = seen.entry(name.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                name
            } else {
                format!("{name}.{}", *n - 1)
            }
        })
        .collect()
}

pub fn load_flow_csv(path: &Path) -> Result<(LabeledDataset, FlowLoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header = normalize_header(reader.headers().map_err(|e| csv_error(path, e))?);
    let label_col = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::Data(format!("{}: no {LABEL_COLUMN:?} column", path.display())))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_col)
        .map(|(_, h)| h.clone())
        .collect();
    let width = feature_names.len();
    if width == 0 {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }

    let mut report = FlowLoadReport::default();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut row = Vec::with_capacity(width);
    let mut record = csv::StringRecord::new();
    while reader
        .read_record(&mut record)
        .map_err(|e| csv_error(path, e))?
    {
        report.rows_read += 1;
        row.clear();
        let mut ok = true;
        let mut non_finite = 0;
        for (j, cell) in record.iter().enumerate() {
            if j == label_col {
                continue;
            }
            match parse_flow_cell(cell.trim()) {
                Some(v) => {
                    non_finite += usize::from(!v.is_finite());
                    row.push(v);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            report.rows_rejected += 1;
            continue;
        }
        report.non_finite_cells += non_finite;
        report.rows_accepted += 1;
        data.extend_from_slice(&row);
        labels.push(record[label_col].trim().to_owned());
    }
    if report.rows_rejected > 0 {
        log::warn!(
            "{}: rejected {} rows with non-numeric feature cells",
            path.display(),
            report.rows_rejected
        );
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no rows accepted", path.display())));
    }
    let features = Matrix::from_vec(labels.len(), width, data)?;
    let d = LabeledDataset::from_string_labels(features, &labels, feature_names)?;
    Ok((d, report))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// Writes the canonical CSV: header, features in shortest round-trip decimal
/// form, class name in the final `Label` column.
pub fn write_canonical_csv(d: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut cells: Vec<String> = Vec::with_capacity(d.n_features() + 1);
    for (i, row) in d.features.iter_rows().enumerate() {
        cells.clear();
        cells.extend(row.iter().map(|v| format_cell(*v)));
        cells.push(d.class_names[d.labels[i]].clone());
        w.write_record(&cells).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "Infinity".into()
    } else if v == f64::NEG_INFINITY {
        "-Infinity".into()
    } else {
        // `Display` for f64 is the shortest string that parses back exactly.
        format!("{v}")
    }
}

/// Writes a flow CSV with an arbitrary header layout, used by the synthetic
/// generator to mimic the public export (leading spaces, label last).
pub fn write_raw_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(w, "{}", r.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn trims_header_and_flags_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "f.csv",
            " Flow Duration, Flow Bytes/s, Label\n\
             10,Infinity,BENIGN\n\
             20,NaN,Bot\n\
             30,abc,BENIGN\n\
             40,5.5, BENIGN\n",
        );
        let (d, r) = load_flow_csv(&p).unwrap();
        assert_eq!(d.feature_names, vec!["Flow Duration", "Flow Bytes/s"]);
        assert_eq!(r.rows_rejected, 1);
        assert_eq!(r.non_finite_cells, 2);
        assert_eq!(d.n_rows(), 3);
        assert!(d.features.get(0, 1).is_infinite());
        assert!(d.features.get(1, 1).is_nan());
        assert_eq!(d.class_names, vec!["BENIGN", "Bot"]);
        assert_eq!(d.labels, vec![0, 1, 0]);
    }

    #[test]
    fn token_match_is_case_sensitive() {
        assert_eq!(parse_flow_cell("Infinity"), Some(f64::INFINITY));
        assert_eq!(parse_flow_cell("infinity"), None);
        assert_eq!(parse_flow_cell("inf"), None);
        assert!(parse_flow_cell("NaN").unwrap().is_nan());
        assert_eq!(parse_flow_cell("nan"), None);
        assert_eq!(parse_flow_cell("-2.5e3"), Some(-2500.0));
    }

    #[test]
    fn missing_label_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "f.csv", "a,b\n1,2\n");
        assert!(matches!(load_flow_csv(&p), Err(Error::Data(_))));
    }

    #[test]
    fn duplicate_headers_disambiguated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "f.csv", " Fwd Header Length, Fwd Header Length,Label\n1,2,x\n");
        let (d, _) = load_flow_csv(&p).unwrap();
        assert_eq!(d.feature_names, vec!["Fwd Header Length", "Fwd Header Length.1"]);
    }
}
