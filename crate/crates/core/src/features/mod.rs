//! The adversary's view of a capture: per-packet flow features, z-score
//! normalization, ANOVA F-scores with top-k selection, and CSV export.

mod anova;
mod csv_io;
mod dataset;
mod extract;
mod zscore;

use thiserror::Error;

pub use anova::{anova_f_scores, select_k_best};
pub use csv_io::{export_csv, import_csv};
pub use dataset::Dataset;
pub use extract::{extract_features, extract_features_with_stats, ExtractStats};
pub use zscore::{zscore_apply, zscore_fit, ZScoreModel};

/// Column order of every extracted dataset.
pub const FEATURE_NAMES: [&str; 10] = [
    "delta_time",
    "dst_port",
    "pkts_per_sec",
    "pkt_len",
    "pkts_in_flow",
    "conversation_len",
    "total_pkt_len",
    "segment_len",
    "stream_time",
    "flow_time",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("dataset needs at least two rows")]
    EmptyDataset,
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("k = {k} outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
