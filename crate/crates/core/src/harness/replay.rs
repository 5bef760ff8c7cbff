use std::collections::HashMap;
use std::time::Instant;

use super::{HarnessError, VirtualClock};
use crate::engine::{Deobfuscator, ObfuscationProfile, Obfuscator, Recovered};
use crate::packet::{flow_key, CaptureFile, FlowKey, Packet};

/// Cost of running one profile over a capture. Byte counts are transport
/// payload bytes, so they include spliced headers but not re-framing.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub technique: String,
    /// Input packets.
    pub packets: usize,
    /// Wire packets after obfuscation (fragmentation emits more).
    pub emitted: usize,
    pub original_bytes: u64,
    pub obfuscated_bytes: u64,
    /// Wall time spent inside the transform, summed over packets.
    pub wall_time_s: f64,
    /// Timestamp shift summed over emitted packets.
    pub latency_us: u64,
    pub skipped: usize,
}

impl OverheadReport {
    pub fn empty(technique: &str) -> Self {
        OverheadReport {
            technique: technique.to_string(),
            packets: 0,
            emitted: 0,
            original_bytes: 0,
            obfuscated_bytes: 0,
            wall_time_s: 0.0,
            latency_us: 0,
            skipped: 0,
        }
    }

    /// `(obfuscated - original) / packets`; `None` for an empty capture.
    pub fn mean_bytes_added(&self) -> Option<f64> {
        (self.packets > 0)
            .then(|| (self.obfuscated_bytes as f64 - self.original_bytes as f64) / self.packets as f64)
    }

    pub fn mean_wall_time_s(&self) -> Option<f64> {
        (self.packets > 0).then(|| self.wall_time_s / self.packets as f64)
    }

    pub fn mean_latency_s(&self) -> Option<f64> {
        (self.emitted > 0).then(|| self.latency_us as f64 / self.emitted as f64 / 1e6)
    }
}

/// Obfuscates `capture` packet by packet in time order. The returned capture
/// is stably re-sorted by timestamp, which keeps every flow's wire order.
pub fn replay(
    capture: &CaptureFile,
    profile: &ObfuscationProfile,
    clock: &mut VirtualClock,
) -> Result<(CaptureFile, OverheadReport), HarnessError> {
    if !capture.is_sorted() {
        return Err(HarnessError::Unsorted);
    }
    let mut obf = Obfuscator::new(profile.clone()).map_err(|e| HarnessError::Engine { index: None, source: e })?;
    let mut report = OverheadReport::empty(&profile.chain_name());
    let mut out = Vec::with_capacity(capture.len());
    for (index, p) in capture.packets.iter().enumerate() {
        clock.advance_to(p.ts);
        let start = Instant::now();
        let emitted = obf.obfuscate(p).map_err(|e| HarnessError::Engine {
            index: Some(index),
            source: e,
        })?;
        report.wall_time_s += start.elapsed().as_secs_f64();
        report.packets += 1;
        report.original_bytes += p.payload.len() as u64;
        for e in &emitted {
            report.emitted += 1;
            report.obfuscated_bytes += e.payload.len() as u64;
            report.latency_us += e.ts.as_micros().saturating_sub(p.ts.as_micros());
        }
        out.extend(emitted);
    }
    report.skipped = obf.skipped();
    let mut result = CaptureFile::new(capture.link_type, out);
    result.sort();
    if let Some(last) = result.packets.last() {
        clock.advance_to(last.ts);
    }
    Ok((result, report))
}

/// De-obfuscates `obfuscated` and checks that every flow's payloads come
/// back byte-identical and in order.
pub fn verify_round_trip(
    original: &CaptureFile,
    obfuscated: &CaptureFile,
    profile: &ObfuscationProfile,
) -> Result<(), HarnessError> {
    let mut deobf = Deobfuscator::new(profile).map_err(|e| HarnessError::Engine { index: None, source: e })?;
    let mut recovered: HashMap<FlowKey, Vec<Packet>> = HashMap::new();
    for (index, p) in obfuscated.packets.iter().enumerate() {
        match deobf.deobfuscate(p) {
            Ok(Recovered::Packet(r)) => recovered.entry(flow_key(&r)).or_default().push(r),
            Ok(Recovered::Buffered { .. }) => {}
            Err(e) => {
                return Err(HarnessError::Engine {
                    index: Some(index),
                    source: e,
                })
            }
        }
    }
    if let Some(e) = deobf.flush().into_iter().next() {
        return Err(HarnessError::Engine { index: None, source: e });
    }
    let mut expected: HashMap<FlowKey, Vec<&Packet>> = HashMap::new();
    for p in &original.packets {
        expected.entry(flow_key(p)).or_default().push(p);
    }
    if expected.len() != recovered.len() {
        return Err(HarnessError::RoundTrip(format!(
            "{} flows in, {} recovered",
            expected.len(),
            recovered.len()
        )));
    }
    for (key, want) in &expected {
        let got = recovered.get(key).map(Vec::as_slice).unwrap_or_default();
        let same = got.len() == want.len()
            && got.iter().zip(want).all(|(g, w)| {
                g.payload == w.payload && g.src_addr == w.src_addr && g.src_port == w.src_port
            });
        if !same {
            return Err(HarnessError::RoundTrip(format!("flow {key:?} differs after recovery")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TechniqueId;
    use crate::packet::{Timestamp, LINKTYPE_RAW};
    use std::net::Ipv4Addr;

    fn capture(n: usize) -> CaptureFile {
        let packets = (0..n)
            .map(|i| {
                Packet::udp(
                    Timestamp::from_micros(i as u64 * 1000),
                    (Ipv4Addr::new(10, 0, 0, 1), 4000 + (i % 3) as u16),
                    (Ipv4Addr::new(10, 0, 0, 2), 53),
                    vec![i as u8; 20 + i % 50],
                )
            })
            .collect();
        CaptureFile::new(LINKTYPE_RAW, packets)
    }

    #[test]
    fn delay_adds_no_bytes_but_latency() {
        let c = capture(200);
        let p = ObfuscationProfile::new(vec![TechniqueId::Delay]).with_seed(3);
        let mut clock = VirtualClock::default();
        let (out, r) = replay(&c, &p, &mut clock).unwrap();
        assert_eq!(r.mean_bytes_added(), Some(0.0));
        let lat = r.mean_latency_s().unwrap();
        assert!((0.01..=0.1).contains(&lat));
        assert!(clock.now() >= c.packets.last().unwrap().ts);
        verify_round_trip(&c, &out, &p).unwrap();
    }

    #[test]
    fn bytes_added_is_exact_difference() {
        let c = capture(300);
        let p = ObfuscationProfile::new(vec![TechniqueId::Fragment, TechniqueId::Delay]).with_seed(8);
        let (out, r) = replay(&c, &p, &mut VirtualClock::default()).unwrap();
        let a: usize = c.packets.iter().map(|p| p.payload.len()).sum();
        let b: usize = out.packets.iter().map(|p| p.payload.len()).sum();
        assert_eq!(r.mean_bytes_added().unwrap(), (b as f64 - a as f64) / 300.0);
        assert!(r.emitted > r.packets);
        verify_round_trip(&c, &out, &p).unwrap();
    }

    #[test]
    fn empty_capture_has_undefined_means() {
        let p = ObfuscationProfile::default();
        let (out, r) = replay(&capture(0), &p, &mut VirtualClock::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!((r.mean_bytes_added(), r.mean_latency_s()), (None, None));
    }

    #[test]
    fn gate_catches_wrong_profile() {
        let c = capture(50);
        let p = ObfuscationProfile::default().with_seed(1);
        let (out, _) = replay(&c, &p, &mut VirtualClock::default()).unwrap();
        assert!(verify_round_trip(&c, &out, &p.clone().with_seed(2)).is_err());
    }

    #[test]
    fn unsorted_capture_rejected() {
        let mut c = capture(3);
        c.packets.swap(0, 2);
        let r = replay(&c, &ObfuscationProfile::default(), &mut VirtualClock::default());
        assert!(matches!(r, Err(HarnessError::Unsorted)));
    }
}
