use std::collections::HashMap;

use ndarray::Array2;

use super::{Dataset, FEATURE_NAMES};
use crate::packet::{flow_key, CaptureFile, FlowKey, Packet, Timestamp};
use crate::Scalar;

/// Counts of packets that did not become rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractStats {
    pub rows: usize,
    pub skipped_non_transport: usize,
    pub unlabeled: usize,
    pub dropped_missing: usize,
}

struct FlowSummary {
    first: Timestamp,
    last: Timestamp,
    count: usize,
}

#[derive(Default)]
struct Running {
    prev: Option<Timestamp>,
    count: usize,
    bytes: usize,
}

/// Builds one feature row per TCP/UDP packet, visiting packets in timestamp
/// order. Packets for which `label_fn` returns `None` are left out.
pub fn extract_features<T, F>(capture: &CaptureFile, label_fn: F) -> Dataset<T>
where
    T: Scalar,
    F: Fn(&Packet) -> Option<usize>,
{
    extract_features_with_stats(capture, label_fn).0
}

pub fn extract_features_with_stats<T, F>(capture: &CaptureFile, label_fn: F) -> (Dataset<T>, ExtractStats)
where
    T: Scalar,
    F: Fn(&Packet) -> Option<usize>,
{
    let mut order: Vec<usize> = (0..capture.packets.len()).collect();
    order.sort_by_key(|&i| capture.packets[i].ts);

    let mut stats = ExtractStats::default();
    let mut flows: HashMap<FlowKey, FlowSummary> = HashMap::new();
    for &i in &order {
        let p = &capture.packets[i];
        if !p.protocol.is_transport() {
            continue;
        }
        flows
            .entry(flow_key(p))
            .and_modify(|f| {
                f.last = p.ts;
                f.count += 1;
            })
            .or_insert(FlowSummary {
                first: p.ts,
                last: p.ts,
                count: 1,
            });
    }

    let mut running: HashMap<FlowKey, Running> = HashMap::new();
    let mut data: Vec<T> = Vec::with_capacity(order.len() * FEATURE_NAMES.len());
    let mut labels = Vec::with_capacity(order.len());
    for &i in &order {
        let p = &capture.packets[i];
        if !p.protocol.is_transport() {
            stats.skipped_non_transport += 1;
            continue;
        }
        let key = flow_key(p);
        let summary = &flows[&key];
        let r = running.entry(key).or_default();
        let delta = r.prev.map_or(0.0, |prev| p.ts.secs_since(prev));
        r.prev = Some(p.ts);
        r.count += 1;
        r.bytes += p.ip_len();
        let Some(label) = label_fn(p) else {
            stats.unlabeled += 1;
            continue;
        };
        let stream_time = p.ts.secs_since(summary.first);
        let pps = if stream_time > 0.0 {
            r.count as f64 / stream_time
        } else {
            0.0
        };
        let row = [
            delta,
            f64::from(p.dst_port),
            pps,
            p.ip_len() as f64,
            r.count as f64,
            summary.count as f64,
            r.bytes as f64,
            p.payload.len() as f64,
            stream_time,
            summary.last.secs_since(summary.first),
        ];
        data.extend(row.iter().map(|&v| T::of(v)));
        labels.push(label);
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, FEATURE_NAMES.len()), data).expect("row-major fill");
    let mut ds = Dataset {
        x,
        y: labels,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    stats.dropped_missing = ds.drop_missing();
    stats.rows = ds.len();
    (ds, stats)
}
