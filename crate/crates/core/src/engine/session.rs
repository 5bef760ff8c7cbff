//! Sender and receiver state machines.

use std::collections::HashMap;

use log::debug;

use super::header::{splice, unsplice, HEADER_LEN};
use super::techniques::*;
use super::{EngineError, ObfuscationProfile, Prng, RecoveryHeader, TechniqueId};
use crate::packet::{directed_flow_key, flow_key, FlowKey, Packet, Timestamp, MAX_PAYLOAD};

/// Fragment groups older than this many subsequent packets are evicted.
pub const REASSEMBLY_HORIZON: u64 = 1024;

/// Per-flow, per-direction packet counters. Sender and receiver each keep one
/// and advance it once per transport packet, so the two stay in lock-step.
#[derive(Debug, Clone, Default)]
pub struct FlowSeqState {
    counters: HashMap<(FlowKey, bool), u32>,
}

impl FlowSeqState {
    /// Returns the current counter for the packet's flow direction and
    /// advances it.
    pub fn next(&mut self, p: &Packet) -> u32 {
        let c = self.counters.entry(directed_flow_key(p)).or_insert(0);
        let seq = *c;
        *c = c.wrapping_add(1);
        seq
    }

    pub fn get(&self, p: &Packet) -> u32 {
        self.counters.get(&directed_flow_key(p)).copied().unwrap_or(0)
    }

    pub fn flows(&self) -> usize {
        self.counters.len()
    }
}

/// Value mixed into every sequence word before header placement. Sender and
/// receiver derive it from the shared session seed; a receiver holding the
/// wrong seed looks for headers in the wrong place.
pub fn session_salt(seed: u64) -> u32 {
    Prng::from_seed64(seed ^ 0xC0FF_EE00_5EED_0001).next_u32()
}

struct Item {
    body: Vec<u8>,
    headers: Vec<RecoveryHeader>,
}

/// Sending side of an obfuscation session.
#[derive(Debug)]
pub struct Obfuscator {
    profile: ObfuscationProfile,
    prng: Prng,
    seq: FlowSeqState,
    salt: u32,
    group_counter: u16,
    last_emitted: HashMap<FlowKey, Timestamp>,
    skipped: usize,
}

impl Obfuscator {
    pub fn new(profile: ObfuscationProfile) -> Result<Self, EngineError> {
        profile.validate()?;
        Ok(Obfuscator {
            prng: Prng::from_seed64(profile.rng_seed),
            salt: session_salt(profile.rng_seed),
            profile,
            seq: FlowSeqState::default(),
            group_counter: 0,
            last_emitted: HashMap::new(),
            skipped: 0,
        })
    }

    pub fn profile(&self) -> &ObfuscationProfile {
        &self.profile
    }

    pub fn seq_state(&self) -> &FlowSeqState {
        &self.seq
    }

    /// Packets that passed through a technique unchanged (too short to
    /// fragment, or not TCP/UDP).
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Obfuscates one packet into one or more wire packets.
    ///
    /// Payload techniques run in profile order; delay, when present, is
    /// applied last to every emitted packet. Non-TCP/UDP packets pass through
    /// untouched and do not advance the sequence counters.
    pub fn obfuscate(&mut self, packet: &Packet) -> Result<Vec<Packet>, EngineError> {
        if !packet.protocol.is_transport() {
            self.skipped += 1;
            return Ok(vec![packet.clone()]);
        }
        let mut items = vec![Item {
            body: packet.payload.clone(),
            headers: Vec::new(),
        }];
        let techniques: Vec<TechniqueId> = self.profile.payload_techniques().collect();
        for t in techniques {
            let mut next = Vec::with_capacity(items.len() + 1);
            for mut item in items {
                let (lo, hi) = (self.profile.pad_min, self.profile.pad_max);
                match t {
                    TechniqueId::Padding => {
                        let h = apply_padding(&mut item.body, lo, hi, &mut self.prng);
                        item.headers.insert(0, h);
                    }
                    TechniqueId::PadXor => {
                        let hs = apply_pad_xor(&mut item.body, lo, hi, &mut self.prng);
                        item.headers.splice(0..0, hs);
                    }
                    TechniqueId::PadShift => {
                        let hs = apply_pad_shift(&mut item.body, lo, hi, &mut self.prng);
                        item.headers.splice(0..0, hs);
                    }
                    TechniqueId::ConstPad => {
                        let h = apply_const_pad(&mut item.body, &mut self.profile.constant_size_state)?;
                        item.headers.insert(0, h);
                    }
                    TechniqueId::Fragment => match split_fragments(&item.body, &mut self.prng) {
                        Some((a, b)) => {
                            let group = self.group_counter;
                            self.group_counter = (self.group_counter + 1) & 0x7FFF;
                            let mut first = vec![RecoveryHeader::new(
                                TechniqueId::Fragment,
                                fragment_param(group, 0),
                            )];
                            first.extend(item.headers);
                            next.push(Item { body: a, headers: first });
                            next.push(Item {
                                body: b,
                                headers: vec![RecoveryHeader::new(
                                    TechniqueId::Fragment,
                                    fragment_param(group, 1),
                                )],
                            });
                            continue;
                        }
                        None => {
                            debug!("payload of {} bytes too small to fragment", item.body.len());
                            self.skipped += 1;
                        }
                    },
                    TechniqueId::Delay => unreachable!("delay is not a payload technique"),
                }
                next.push(item);
            }
            items = next;
        }

        let key = flow_key(packet);
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            let len = item.body.len() + item.headers.len() * HEADER_LEN;
            if len > MAX_PAYLOAD {
                return Err(EngineError::Oversize(len));
            }
            let seq = self.seq.next(packet) ^ self.salt;
            let payload = if item.headers.is_empty() {
                item.body
            } else {
                splice(&item.body, &item.headers, seq)?
            };
            let mut ts = packet.ts;
            if self.profile.has_delay() {
                let d = sample_delay_us(
                    &mut self.prng,
                    self.profile.delay_min_us,
                    self.profile.delay_max_us,
                );
                ts = ts.add_micros(d);
            }
            if let Some(&prev) = self.last_emitted.get(&key) {
                ts = ts.max(prev);
            }
            self.last_emitted.insert(key, ts);
            out.push(Packet {
                ts,
                payload,
                ..packet.clone()
            });
        }
        Ok(out)
    }
}

/// What the receiver produced for one wire packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recovered {
    /// A fully restored packet (possibly completing a fragment group).
    Packet(Packet),
    /// A fragment was buffered while its partner is outstanding.
    Buffered { group: u16, index: u8 },
}

/// One parsed fragment awaiting its partner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPart {
    pub key: FlowKey,
    pub group: u16,
    pub index: u8,
    pub body: Vec<u8>,
    /// Headers still to be reversed after the group is merged.
    pub remaining: Vec<RecoveryHeader>,
    pub packet: Packet,
}

#[derive(Debug, Default)]
struct Pending {
    parts: [Option<FragmentPart>; 2],
    born: u64,
}

/// Buffers fragment halves by (flow, group id) and merges them by index.
#[derive(Debug, Default)]
pub struct Reassembler {
    pending: HashMap<(FlowKey, u16), Pending>,
    clock: u64,
}

impl Reassembler {
    /// Counts one observed packet and evicts groups that have waited longer
    /// than [`REASSEMBLY_HORIZON`] packets.
    pub fn tick(&mut self) -> Vec<EngineError> {
        self.clock += 1;
        let now = self.clock;
        let mut expired: Vec<(FlowKey, u16)> = self
            .pending
            .iter()
            .filter(|(_, p)| now - p.born > REASSEMBLY_HORIZON)
            .map(|(k, _)| *k)
            .collect();
        expired.sort();
        expired
            .into_iter()
            .map(|k| {
                self.pending.remove(&k);
                EngineError::OrphanFragment(k.1)
            })
            .collect()
    }

    /// Adds a part; returns the merged body, the outer headers still to be
    /// reversed and the first fragment's packet once both halves are present.
    pub fn push(
        &mut self,
        part: FragmentPart,
    ) -> Result<Option<(Vec<u8>, Vec<RecoveryHeader>, Packet)>, EngineError> {
        let clock = self.clock;
        let key = (part.key, part.group);
        let slot = self.pending.entry(key).or_insert_with(|| Pending {
            parts: [None, None],
            born: clock,
        });
        let idx = usize::from(part.index);
        if slot.parts[idx].is_some() {
            return Err(EngineError::SeqDesync(format!(
                "duplicate fragment {} of group {}",
                part.index, part.group
            )));
        }
        slot.parts[idx] = Some(part);
        if slot.parts.iter().all(Option::is_some) {
            let Pending { parts: [a, b], .. } = self.pending.remove(&key).expect("present");
            let (a, b) = (a.expect("first"), b.expect("second"));
            let mut body = a.body;
            body.extend_from_slice(&b.body);
            return Ok(Some((body, a.remaining, a.packet)));
        }
        Ok(None)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Drops every incomplete group, reporting each as orphaned.
    pub fn flush(&mut self) -> Vec<EngineError> {
        let mut keys: Vec<_> = self.pending.keys().copied().collect();
        keys.sort();
        self.pending.clear();
        keys.into_iter().map(|k| EngineError::OrphanFragment(k.1)).collect()
    }
}

/// Receiving side of an obfuscation session. Knows the session profile, which
/// tells it whether headers are expected at all.
#[derive(Debug)]
pub struct Deobfuscator {
    expects_headers: bool,
    salt: u32,
    seq: FlowSeqState,
    reassembler: Reassembler,
    orphans: Vec<EngineError>,
}

impl Deobfuscator {
    pub fn new(profile: &ObfuscationProfile) -> Result<Self, EngineError> {
        profile.validate()?;
        Ok(Deobfuscator {
            expects_headers: profile.carries_headers(),
            salt: session_salt(profile.rng_seed),
            seq: FlowSeqState::default(),
            reassembler: Reassembler::default(),
            orphans: Vec::new(),
        })
    }

    pub fn seq_state(&self) -> &FlowSeqState {
        &self.seq
    }

    /// Parses headers off a wire packet and reverses transforms up to the
    /// first fragment boundary. Returns either a restored packet or a
    /// fragment part for the reassembler.
    pub fn parse(&mut self, packet: &Packet) -> Result<Result<Packet, FragmentPart>, EngineError> {
        if !packet.protocol.is_transport() {
            return Ok(Ok(packet.clone()));
        }
        let seq = self.seq.next(packet) ^ self.salt;
        if !self.expects_headers || packet.payload.len() < HEADER_LEN {
            return Ok(Ok(packet.clone()));
        }
        let (headers, body) = unsplice(&packet.payload, seq)?;
        reverse(body, headers, packet.clone())
    }

    /// Full receive path: parse, reassemble, and finish reversal.
    pub fn deobfuscate(&mut self, packet: &Packet) -> Result<Recovered, EngineError> {
        let evicted = self.reassembler.tick();
        self.orphans.extend(evicted);
        let mut parsed = self.parse(packet)?;
        loop {
            match parsed {
                Ok(p) => return Ok(Recovered::Packet(p)),
                Err(part) => {
                    let (group, index) = (part.group, part.index);
                    match self.reassembler.push(part)? {
                        None => return Ok(Recovered::Buffered { group, index }),
                        Some((body, remaining, first)) => {
                            parsed = reverse(body, remaining, first)?;
                        }
                    }
                }
            }
        }
    }

    /// Orphaned fragment groups evicted since the last call.
    pub fn drain_orphans(&mut self) -> Vec<EngineError> {
        std::mem::take(&mut self.orphans)
    }

    /// Ends the session: every still-incomplete group is orphaned.
    pub fn flush(&mut self) -> Vec<EngineError> {
        let mut out = self.drain_orphans();
        out.extend(self.reassembler.flush());
        out
    }

    pub fn reassembler_mut(&mut self) -> &mut Reassembler {
        &mut self.reassembler
    }
}

/// Reverses headers outermost-first until done or a fragment is reached.
fn reverse(
    mut body: Vec<u8>,
    headers: Vec<RecoveryHeader>,
    packet: Packet,
) -> Result<Result<Packet, FragmentPart>, EngineError> {
    let mut iter = headers.into_iter();
    while let Some(h) = iter.next() {
        match h.technique {
            TechniqueId::Padding => remove_padding(&mut body, h.param)?,
            TechniqueId::PadXor => xor_keystream(&mut body, h.param),
            TechniqueId::PadShift => undo_shift(&mut body, h.param)?,
            TechniqueId::ConstPad => remove_const_pad(&mut body, h.param)?,
            TechniqueId::Fragment => {
                let (group, index) = fragment_fields(h.param);
                let remaining: Vec<_> = iter.collect();
                if index == 1 && !remaining.is_empty() {
                    return Err(EngineError::SeqDesync(
                        "second fragment carries inner headers".into(),
                    ));
                }
                return Ok(Err(FragmentPart {
                    key: flow_key(&packet),
                    group,
                    index,
                    body,
                    remaining,
                    packet,
                }));
            }
            TechniqueId::Delay => {
                return Err(EngineError::SeqDesync("delay never carries a header".into()))
            }
        }
    }
    Ok(Ok(Packet {
        payload: body,
        ..packet
    }))
}
