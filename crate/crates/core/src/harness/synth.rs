use std::collections::HashMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::HarnessError;
use crate::packet::{CaptureFile, Packet, Timestamp, LINKTYPE_ETHERNET};

/// Generator settings for one synthetic device class.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSignature {
    pub address: Ipv4Addr,
    pub server: Ipv4Addr,
    pub server_port: u16,
    pub tcp: bool,
    /// Inclusive request payload length range.
    pub request_len: (usize, usize),
    pub response_len: (usize, usize),
    /// Mean gap before each request, in seconds.
    pub request_gap_s: f64,
}

/// Most device classes the synthetic generator supports.
pub const MAX_DEVICES: usize = 12;

/// Device `d < MAX_DEVICES` of the synthetic corpus. Length bands are
/// disjoint across devices; request gaps overlap heavily; server ports are
/// shared in groups.
pub fn device_signature(d: usize) -> DeviceSignature {
    let (server_port, tcp, server) = match d % 5 {
        0 | 1 => (8883, true, Ipv4Addr::new(198, 51, 100, 10)),
        2 | 3 => (443, true, Ipv4Addr::new(198, 51, 100, 20)),
        _ => (5683, false, Ipv4Addr::new(198, 51, 100, 30)),
    };
    let req = 40 + 45 * d;
    let resp = 40 + 45 * (d + MAX_DEVICES + 1);
    DeviceSignature {
        address: Ipv4Addr::new(192, 168, 1, 10 + d as u8),
        server,
        server_port,
        tcp,
        request_len: (req, req + 30),
        response_len: (resp, resp + 30),
        request_gap_s: 0.20 + 0.03 * d as f64,
    }
}

/// A capture with a device label for every host address.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCapture {
    pub capture: CaptureFile,
    /// Host address and its class id.
    pub labels: Vec<(Ipv4Addr, usize)>,
}

impl LabeledCapture {
    pub fn label_map(&self) -> HashMap<Ipv4Addr, usize> {
        self.labels.iter().copied().collect()
    }

    /// Labels a packet by its source address, else its destination.
    pub fn labeler(&self) -> impl Fn(&Packet) -> Option<usize> {
        let map = self.label_map();
        move |p: &Packet| map.get(&p.src_addr).or_else(|| map.get(&p.dst_addr)).copied()
    }
}

pub const PACKETS_PER_FLOW: (usize, usize) = (6, 14);
const RESPONSE_GAP_US: (u64, u64) = (2_000, 30_000);
const SPAN_S: f64 = 3_600.0;

/// Request/response flows for `num_devices` classes. Every flow draws its
/// packet count from the same range, so counts carry no class signal.
pub fn synth_corpus(seed: u64, num_devices: usize, flows_per_device: usize) -> Result<LabeledCapture, HarnessError> {
    if !(2..=MAX_DEVICES).contains(&num_devices) {
        return Err(HarnessError::Scenario(format!(
            "synthetic corpus needs 2..={MAX_DEVICES} devices, got {num_devices}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packets = Vec::new();
    let mut labels = Vec::new();
    for d in 0..num_devices {
        let sig = device_signature(d);
        labels.push((sig.address, d));
        let gap = Exp::new(1.0 / sig.request_gap_s).expect("positive rate");
        for _ in 0..flows_per_device {
            let eph: u16 = rng.gen_range(32_768..61_000);
            let mut t = (rng.gen_range(0.0..SPAN_S) * 1e6) as u64;
            let count = rng.gen_range(PACKETS_PER_FLOW.0..=PACKETS_PER_FLOW.1);
            for i in 0..count {
                let request = i % 2 == 0;
                if i > 0 {
                    t += if request {
                        (gap.sample(&mut rng) * 1e6) as u64 + 1
                    } else {
                        rng.gen_range(RESPONSE_GAP_US.0..=RESPONSE_GAP_US.1)
                    };
                }
                let (lo, hi) = if request { sig.request_len } else { sig.response_len };
                let mut payload = vec![0u8; rng.gen_range(lo..=hi)];
                rng.fill(payload.as_mut_slice());
                let dev = (sig.address, eph);
                let srv = (sig.server, sig.server_port);
                let (src, dst) = if request { (dev, srv) } else { (srv, dev) };
                let ts = Timestamp::from_micros(t);
                packets.push(if sig.tcp {
                    Packet::tcp(ts, src, dst, payload)
                } else {
                    Packet::udp(ts, src, dst, payload)
                });
            }
        }
    }
    let mut capture = CaptureFile::new(LINKTYPE_ETHERNET, packets);
    capture.sort();
    Ok(LabeledCapture { capture, labels })
}
