//! CAN frame logs.
//!
//! One frame per line: `timestamp,can_id,dlc,b0,..,b{dlc-1},tag` where the
//! identifier and payload bytes are hex without a `0x` prefix and `tag` is
//! either an `R`/`T` flag (regular / injected) or a class name.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::dataset::LabeledDataset;
use crate::matrix::Matrix;

pub const CAN_FEATURES: [&str; 10] = [
    "CAN ID", "DLC", "DATA[0]", "DATA[1]", "DATA[2]", "DATA[3]", "DATA[4]", "DATA[5]", "DATA[6]",
    "DATA[7]",
];

pub const MAX_CAN_ID: u16 = 0x7FF;

#[derive(Debug, Clone, PartialEq)]
pub struct CanFrame {
    pub timestamp: f64,
    pub can_id: u16,
    pub dlc: u8,
    /// Payload; slots at or beyond `dlc` are zero.
    pub data: [u8; 8],
    pub label: String,
}

impl CanFrame {
    pub fn feature_row(&self) -> [f64; 10] {
        let mut row = [0.0; 10];
        row[0] = f64::from(self.can_id);
        row[1] = f64::from(self.dlc);
        for (slot, &b) in row[2..].iter_mut().zip(&self.data) {
            *slot = f64::from(b);
        }
        row
    }

    /// Renders the frame in the flag-file layout used by the public logs.
    pub fn to_flag_line(&self, injected: bool) -> String {
        let mut s = format!("{:.6},{:04x},{}", self.timestamp, self.can_id, self.dlc);
        for b in &self.data[..usize::from(self.dlc)] {
            s.push_str(&format!(",{b:02x}"));
        }
        s.push_str(if injected { ",T" } else { ",R" });
        s
    }
}

/// How the trailing token of a row becomes a class name.
#[derive(Debug, Clone, PartialEq)]
pub enum CanLabelPolicy {
    /// `R` rows are normal traffic, `T` rows carry the file's attack name.
    Flag {
        attack_name: String,
        normal_name: String,
    },
    /// The trailing token is the class name itself.
    LabelColumn,
}

impl CanLabelPolicy {
    pub fn attack_file(attack_name: impl Into<String>) -> Self {
        CanLabelPolicy::Flag {
            attack_name: attack_name.into(),
            normal_name: "Normal".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CanLoadReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    /// Rows dropped because the DLC was outside 0..=8.
    pub rejected_dlc: usize,
    /// Rows dropped because the identifier does not fit 11 bits.
    pub rejected_id: usize,
    pub first_rejected_line: Option<u64>,
}

impl CanLoadReport {
    pub fn rejected(&self) -> usize {
        self.rejected_dlc + self.rejected_id
    }
}

#[derive(Debug, PartialEq)]
pub enum RowOutcome {
    Frame(CanFrame),
    RejectedDlc,
    RejectedId,
    Blank,
}

fn parse_hex_u8(tok: &str, line: u64, what: &str) -> Result<u8> {
    u8::from_str_radix(tok.trim(), 16).map_err(|_| Error::Parse {
        line,
        message: format!("malformed hex {what} {tok:?}"),
    })
}

/// Parses one log line. Malformed fields are hard errors; an out-of-range DLC
/// or identifier only rejects the row.
pub fn parse_can_line(text: &str, line: u64, policy: &CanLabelPolicy) -> Result<RowOutcome> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(RowOutcome::Blank);
    }
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line,
            message: format!("expected at least 4 fields, found {}", fields.len()),
        });
    }
    let timestamp: f64 = fields[0].parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed timestamp {:?}", fields[0]),
    })?;
    let can_id = u32::from_str_radix(fields[1], 16).map_err(|_| Error::Parse {
        line,
        message: format!("malformed hex CAN ID {:?}", fields[1]),
    })?;
    let dlc: i64 = fields[2].parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed DLC {:?}", fields[2]),
    })?;
    if !(0..=8).contains(&dlc) {
        return Ok(RowOutcome::RejectedDlc);
    }
    if can_id > u32::from(MAX_CAN_ID) {
        return Ok(RowOutcome::RejectedId);
    }
    let dlc = dlc as usize;
    if fields.len() != 3 + dlc + 1 {
        return Err(Error::Parse {
            line,
            message: format!(
                "DLC {dlc} requires {} fields, found {}",
                3 + dlc + 1,
                fields.len()
            ),
        });
    }
    let mut data = [0u8; 8];
    for (slot, tok) in data.iter_mut().zip(&fields[3..3 + dlc]) {
        *slot = parse_hex_u8(tok, line, "data byte")?;
    }
    let tag = fields[3 + dlc];
    let label = match policy {
        CanLabelPolicy::Flag {
            attack_name,
            normal_name,
        } => match tag {
            "R" => normal_name.clone(),
            "T" => attack_name.clone(),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected flag R or T, found {other:?}"),
                })
            }
        },
        CanLabelPolicy::LabelColumn => {
            if tag.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty label".into(),
                });
            }
            tag.to_owned()
        }
    };
    Ok(RowOutcome::Frame(CanFrame {
        timestamp,
        can_id: can_id as u16,
        dlc: dlc as u8,
        data,
        label,
    }))
}

/// Reads every accepted frame of a log, timestamps included.
pub fn read_can_frames(
    path: &Path,
    policy: &CanLabelPolicy,
) -> Result<(Vec<CanFrame>, CanLoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = CanLoadReport::default();
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        match parse_can_line(&text, line_no, policy)? {
            RowOutcome::Blank => continue,
            RowOutcome::Frame(f) => {
                report.rows_read += 1;
                report.rows_accepted += 1;
                frames.push(f);
            }
            RowOutcome::RejectedDlc => {
                report.rows_read += 1;
                report.rejected_dlc += 1;
                report.first_rejected_line.get_or_insert(line_no);
            }
            RowOutcome::RejectedId => {
                report.rows_read += 1;
                report.rejected_id += 1;
                report.first_rejected_line.get_or_insert(line_no);
            }
        }
    }
    if report.rejected() > 0 {
        log::warn!(
            "{}: rejected {} rows ({} bad DLC, {} bad ID), first at line {:?}",
            path.display(),
            report.rejected(),
            report.rejected_dlc,
            report.rejected_id,
            report.first_rejected_line
        );
    }
    Ok((frames, report))
}

/// Converts frames to the ten-feature layout; the timestamp is dropped.
pub fn frames_to_dataset(frames: &[CanFrame]) -> Result<LabeledDataset> {
    let mut data = Vec::with_capacity(frames.len() * CAN_FEATURES.len());
    for f in frames {
        data.extend_from_slice(&f.feature_row());
    }
    let features = Matrix::from_vec(frames.len(), CAN_FEATURES.len(), data)?;
    let labels: Vec<String> = frames.iter().map(|f| f.label.clone()).collect();
    LabeledDataset::from_string_labels(
        features,
        &labels,
        CAN_FEATURES.iter().map(|s| s.to_string()).collect(),
    )
}

pub fn load_can_csv(path: &Path, policy: &CanLabelPolicy) -> Result<(LabeledDataset, CanLoadReport)> {
    let (frames, report) = read_can_frames(path, policy)?;
    if frames.is_empty() {
        return Err(Error::Data(format!("{}: no frames accepted", path.display())));
    }
    Ok((frames_to_dataset(&frames)?, report))
}

/// Loads a set of per-attack log files and merges them into one dataset.
pub fn load_can_files(
    files: &[(impl AsRef<Path>, CanLabelPolicy)],
) -> Result<(LabeledDataset, CanLoadReport)> {
    let mut merged: Option<LabeledDataset> = None;
    let mut total = CanLoadReport::default();
    for (path, policy) in files {
        let (d, r) = load_can_csv(path.as_ref(), policy)?;
        total.rows_read += r.rows_read;
        total.rows_accepted += r.rows_accepted;
        total.rejected_dlc += r.rejected_dlc;
        total.rejected_id += r.rejected_id;
        if total.first_rejected_line.is_none() {
            total.first_rejected_line = r.first_rejected_line;
        }
        merged = Some(match merged {
            None => d,
            Some(m) => m.concat(&d)?,
        });
    }
    let merged = merged.ok_or_else(|| Error::InvalidArgument("no CAN files given".into()))?;
    Ok((merged, total))
}

pub fn write_flag_log(path: &Path, frames: &[(CanFrame, bool)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (f, injected) in frames {
        writeln!(w, "{}", f.to_flag_line(*injected)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dos() -> CanLabelPolicy {
        CanLabelPolicy::attack_file("DoS")
    }

    #[test]
    fn parses_full_frame() {
        let row = "1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R";
        let RowOutcome::Frame(f) = parse_can_line(row, 1, &dos()).unwrap() else {
            panic!("expected frame");
        };
        assert_eq!(f.can_id, 0x316);
        assert_eq!(f.dlc, 8);
        assert_eq!(f.data, [0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6f]);
        assert_eq!(f.label, "Normal");
    }

    #[test]
    fn short_dlc_zero_fills() {
        let row = "1.0,02c0,2,ab,cd,T";
        let RowOutcome::Frame(f) = parse_can_line(row, 1, &dos()).unwrap() else {
            panic!("expected frame");
        };
        assert_eq!(f.data, [0xab, 0xcd, 0, 0, 0, 0, 0, 0]);
        assert_eq!(f.label, "DoS");
    }

    #[test]
    fn bad_hex_reports_line() {
        let err = parse_can_line("1.0,0316,1,zz,R", 17, &dos()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_dlc_rejected_not_fatal() {
        assert_eq!(
            parse_can_line("1.0,0316,9,00,R", 3, &dos()).unwrap(),
            RowOutcome::RejectedDlc
        );
        assert_eq!(
            parse_can_line("1.0,0800,0,R", 3, &dos()).unwrap(),
            RowOutcome::RejectedId
        );
    }

    #[test]
    fn label_column_policy() {
        let RowOutcome::Frame(f) =
            parse_can_line("2.5,0000,0,Fuzzy", 1, &CanLabelPolicy::LabelColumn).unwrap()
        else {
            panic!("expected frame");
        };
        assert_eq!(f.label, "Fuzzy");
        assert_eq!(f.dlc, 0);
    }

    #[test]
    fn file_load_counts_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dos.csv");
        std::fs::write(
            &p,
            "1.0,0000,8,00,00,00,00,00,00,00,00,T\n\
             1.1,0316,8,05,21,68,09,21,21,00,6f,R\n\
             1.2,0316,12,00,R\n\
             \n\
             1.3,043f,2,01,45,R\n",
        )
        .unwrap();
        let (d, r) = load_can_csv(&p, &dos()).unwrap();
        assert_eq!(r.rows_accepted, 3);
        assert_eq!(r.rejected_dlc, 1);
        assert_eq!(r.first_rejected_line, Some(3));
        assert_eq!(d.n_features(), 10);
        assert_eq!(d.feature_names[0], "CAN ID");
        assert_eq!(d.class_names, vec!["DoS", "Normal"]);
        assert_eq!(d.class_counts(), vec![1, 2]);
        assert_eq!(d.features.row(2), &[f64::from(0x43fu16), 2.0, 1.0, 69.0, 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn flag_line_round_trip() {
        let f = CanFrame {
            timestamp: 12.5,
            can_id: 0x43f,
            dlc: 3,
            data: [1, 2, 3, 0, 0, 0, 0, 0],
            label: "Gear".into(),
        };
        let line = f.to_flag_line(true);
        assert_eq!(line, "12.500000,043f,3,01,02,03,T");
        let RowOutcome::Frame(g) =
            parse_can_line(&line, 1, &CanLabelPolicy::attack_file("Gear")).unwrap()
        else {
            panic!()
        };
        assert_eq!(g, f);
    }
}
