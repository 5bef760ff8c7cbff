//! End-to-end experiments: replay a capture through obfuscation on a virtual
//! clock, verify recovery, extract features and run an attack plan.

mod clock;
mod labels;
mod replay;
mod report;
mod scenario;
mod synth;

use thiserror::Error;

use crate::engine::EngineError;
use crate::features::FeatureError;
use crate::models::ModelError;
use crate::packet::PcapError;

pub use clock::VirtualClock;
pub use labels::{labels_csv, parse_labels};
pub use replay::{replay, verify_round_trip, OverheadReport};
pub use report::{format_stat, render_overhead, render_report, report_csv, reports_csv, REPORT_CSV_HEADER};
pub use scenario::{
    parse_scenarios, run_attack, run_scenario, AttackPlan, CaptureSource, EvalReport, EvalRow, RangeOverrides, Scenario,
    BASELINE_TECHNIQUE,
};
pub use synth::{device_signature, synth_corpus, DeviceSignature, LabeledCapture, MAX_DEVICES, PACKETS_PER_FLOW};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("capture is not sorted by timestamp")]
    Unsorted,
    #[error("{}{source}", index.map_or(String::new(), |i| format!("packet {i}: ")))]
    Engine {
        index: Option<usize>,
        #[source]
        source: EngineError,
    },
    #[error("round trip failed: {0}")]
    RoundTrip(String),
    #[error(transparent)]
    Pcap(#[from] PcapError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("labels: {0}")]
    Labels(String),
    #[error("{0}")]
    Io(String),
}

impl From<EngineError> for HarnessError {
    fn from(e: EngineError) -> Self {
        HarnessError::Engine { index: None, source: e }
    }
}
