//! Packets, flow keys and classic pcap I/O.

mod pcap;

use std::fmt;
use std::net::Ipv4Addr;

pub use pcap::{read_pcap, write_pcap, PcapError, LINKTYPE_ETHERNET, LINKTYPE_RAW};

/// Largest payload a [`Packet`] may carry.
pub const MAX_PAYLOAD: usize = 65_500;

const MICROS_PER_SEC: u64 = 1_000_000;

/// Capture timestamp kept as an exact (seconds, microseconds) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub sec: u32,
    pub usec: u32,
}

impl Timestamp {
    /// Builds a timestamp, normalizing any microsecond overflow into seconds.
    pub fn new(sec: u32, usec: u32) -> Self {
        Self::from_micros(u64::from(sec) * MICROS_PER_SEC + u64::from(usec))
    }

    pub fn from_micros(us: u64) -> Self {
        Self {
            sec: (us / MICROS_PER_SEC) as u32,
            usec: (us % MICROS_PER_SEC) as u32,
        }
    }

    pub fn as_micros(self) -> u64 {
        u64::from(self.sec) * MICROS_PER_SEC + u64::from(self.usec)
    }

    pub fn add_micros(self, us: u64) -> Self {
        Self::from_micros(self.as_micros() + us)
    }

    pub fn as_secs_f64(self) -> f64 {
        f64::from(self.sec) + f64::from(self.usec) / 1e6
    }

    /// Difference `self - earlier` in seconds, saturating at zero.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        self.as_micros().saturating_sub(earlier.as_micros()) as f64 / 1e6
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.sec, self.usec)
    }
}

/// Transport protocol of a packet. `Other` carries the IP protocol number
/// when the frame was IPv4, and 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Tcp,
    Udp,
    Other(u8),
}

impl Protocol {
    pub fn ip_number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Other(n) => n,
        }
    }

    pub fn is_transport(self) -> bool {
        matches!(self, Protocol::Tcp | Protocol::Udp)
    }

    /// Transport header length used when framing the packet on write.
    pub fn header_len(self) -> usize {
        match self {
            Protocol::Tcp => 20,
            Protocol::Udp => 8,
            Protocol::Other(_) => 0,
        }
    }
}

/// One captured packet.
///
/// For TCP and UDP over IPv4 `payload` is the transport payload. For every
/// other frame `payload` holds the complete record bytes and the addressing
/// fields are informational only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub ts: Timestamp,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn udp(
        ts: Timestamp,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        payload: Vec<u8>,
    ) -> Self {
        Self::transport(Protocol::Udp, ts, src, dst, payload)
    }

    pub fn tcp(
        ts: Timestamp,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        payload: Vec<u8>,
    ) -> Self {
        Self::transport(Protocol::Tcp, ts, src, dst, payload)
    }

    fn transport(
        protocol: Protocol,
        ts: Timestamp,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        payload: Vec<u8>,
    ) -> Self {
        Packet {
            ts,
            src_addr: src.0,
            dst_addr: dst.0,
            src_port: src.1,
            dst_port: dst.1,
            protocol,
            payload,
        }
    }

    /// The packet with source and destination swapped.
    pub fn reversed(&self) -> Self {
        Packet {
            src_addr: self.dst_addr,
            dst_addr: self.src_addr,
            src_port: self.dst_port,
            dst_port: self.src_port,
            ..self.clone()
        }
    }

    /// IPv4 total length of the packet as framed on the wire.
    pub fn ip_len(&self) -> usize {
        match self.protocol {
            Protocol::Other(_) => self.payload.len(),
            p => 20 + p.header_len() + self.payload.len(),
        }
    }

    pub fn flow_key(&self) -> FlowKey {
        flow_key(self)
    }
}

/// Direction-insensitive 5-tuple. The lexicographically smaller
/// `(address, port)` endpoint is always stored first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub lo: (Ipv4Addr, u16),
    pub hi: (Ipv4Addr, u16),
    pub protocol: Protocol,
}

/// Canonical bidirectional flow key of a packet.
pub fn flow_key(p: &Packet) -> FlowKey {
    directed_flow_key(p).0
}

/// Flow key plus whether the packet travels from `lo` to `hi`.
pub fn directed_flow_key(p: &Packet) -> (FlowKey, bool) {
    let a = (p.src_addr, p.src_port);
    let b = (p.dst_addr, p.dst_port);
    let forward = a <= b;
    let (lo, hi) = if forward { (a, b) } else { (b, a) };
    (
        FlowKey {
            lo,
            hi,
            protocol: p.protocol,
        },
        forward,
    )
}

/// A link type plus an ordered list of packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFile {
    pub link_type: u32,
    pub packets: Vec<Packet>,
}

impl CaptureFile {
    pub fn new(link_type: u32, packets: Vec<Packet>) -> Self {
        CaptureFile { link_type, packets }
    }

    /// Stable sort by timestamp; packets with equal timestamps keep their order.
    pub fn sort(&mut self) {
        self.packets.sort_by_key(|p| p.ts);
    }

    pub fn is_sorted(&self) -> bool {
        self.packets.windows(2).all(|w| w[0].ts <= w[1].ts)
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}
