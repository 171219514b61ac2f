//! Parsing, sanitizing and partitioning of labeled traffic datasets.

mod can;
mod dataset;
mod flow;
mod sanitize;
mod split;

pub use can::{
    frames_to_dataset, load_can_csv, load_can_files, parse_can_line, read_can_frames,
    write_flag_log, CanFrame, CanLabelPolicy, CanLoadReport, RowOutcome, CAN_FEATURES, MAX_CAN_ID,
};
pub use dataset::{encode_labels, is_normal_name, LabeledDataset};
pub use flow::{
    load_flow_csv, parse_flow_cell, write_canonical_csv, write_raw_csv, FlowLoadReport,
    LABEL_COLUMN,
};
pub use sanitize::{finite_median, sanitize, SanitizeReport};
pub use split::{
    feasible_folds, split_holdout, split_indices, stratified_folds, stratified_train_counts,
    SplitSpec,
};
