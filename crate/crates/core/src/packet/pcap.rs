use std::net::Ipv4Addr;

use thiserror::Error;

use super::{CaptureFile, Packet, Protocol, Timestamp, MAX_PAYLOAD};

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

const MAGIC: u32 = 0xA1B2_C3D4;
const MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
const PCAPNG_MAGIC: u32 = 0x0A0D_0D0A;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const SNAPLEN: u32 = 65_535;
const ETH_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcapError {
    #[error("malformed pcap: {0}")]
    MalformedPcap(String),
    #[error("unsupported capture format (magic {magic:#010x}, version {major}.{minor})")]
    UnsupportedVersion { magic: u32, major: u16, minor: u16 },
}

fn malformed(msg: impl Into<String>) -> PcapError {
    PcapError::MalformedPcap(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PcapError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("{what} overruns buffer at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, PcapError> {
        let b: [u8; 4] = self.take(4, what)?.try_into().expect("4 bytes");
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }

    fn u16(&mut self, what: &str) -> Result<u16, PcapError> {
        let b: [u8; 2] = self.take(2, what)?.try_into().expect("2 bytes");
        Ok(if self.big_endian {
            u16::from_be_bytes(b)
        } else {
            u16::from_le_bytes(b)
        })
    }
}

/// Parses a classic (v2.4, microsecond) pcap file.
pub fn read_pcap(bytes: &[u8]) -> Result<CaptureFile, PcapError> {
    if bytes.len() < 4 {
        return Err(malformed("missing magic number"));
    }
    let raw_magic = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"));
    let big_endian = match raw_magic {
        MAGIC => false,
        MAGIC_SWAPPED => true,
        PCAPNG_MAGIC => {
            return Err(PcapError::UnsupportedVersion {
                magic: raw_magic,
                major: 0,
                minor: 0,
            })
        }
        0x4D3C_B2A1 | 0xA1B2_3C4D => {
            // nanosecond-resolution variant
            return Err(PcapError::UnsupportedVersion {
                magic: raw_magic,
                major: 0,
                minor: 0,
            });
        }
        other => return Err(malformed(format!("bad magic {other:#010x}"))),
    };
    let mut r = Reader {
        buf: bytes,
        pos: 4,
        big_endian,
    };
    let major = r.u16("version")?;
    let minor = r.u16("version")?;
    if (major, minor) != (2, 4) {
        return Err(PcapError::UnsupportedVersion {
            magic: MAGIC,
            major,
            minor,
        });
    }
    r.take(8, "thiszone/sigfigs")?;
    let _snaplen = r.u32("snaplen")?;
    let link_type = r.u32("linktype")?;

    let mut packets = Vec::new();
    while r.pos < bytes.len() {
        let sec = r.u32("record header")?;
        let usec = r.u32("record header")?;
        let incl_len = r.u32("record header")? as usize;
        let _orig_len = r.u32("record header")?;
        if usec >= 1_000_000 {
            return Err(malformed(format!("record {} has ts_usec {usec}", packets.len())));
        }
        let data = r.take(incl_len, "record data")?;
        let mut pkt = decode_frame(link_type, data);
        pkt.ts = Timestamp { sec, usec };
        if pkt.payload.len() > MAX_PAYLOAD {
            return Err(malformed(format!(
                "record {} payload of {} bytes exceeds {MAX_PAYLOAD}",
                packets.len(),
                pkt.payload.len()
            )));
        }
        packets.push(pkt);
    }
    Ok(CaptureFile { link_type, packets })
}

fn opaque(data: &[u8], proto: u8, src: Ipv4Addr, dst: Ipv4Addr) -> Packet {
    Packet {
        ts: Timestamp::default(),
        src_addr: src,
        dst_addr: dst,
        src_port: 0,
        dst_port: 0,
        protocol: Protocol::Other(proto),
        payload: data.to_vec(),
    }
}

fn decode_frame(link_type: u32, data: &[u8]) -> Packet {
    let ip = match link_type {
        LINKTYPE_ETHERNET => {
            if data.len() < ETH_HEADER_LEN
                || u16::from_be_bytes([data[12], data[13]]) != ETHERTYPE_IPV4
            {
                None
            } else {
                Some(&data[ETH_HEADER_LEN..])
            }
        }
        LINKTYPE_RAW => Some(data),
        _ => None,
    };
    ip.and_then(|ip| decode_ipv4(data, ip))
        .unwrap_or_else(|| opaque(data, 0, Ipv4Addr::UNSPECIFIED, Ipv4Addr::UNSPECIFIED))
}

fn decode_ipv4(frame: &[u8], ip: &[u8]) -> Option<Packet> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    let total_len = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let proto = ip[9];
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1FFF;
    let more_frags = ip[6] & 0x20 != 0;
    if ihl < 20 || total_len < ihl || ip.len() < ihl || frag_offset != 0 || more_frags {
        return Some(opaque(frame, proto, src, dst));
    }
    // A capture truncated below the IP total length keeps what it has.
    let end = total_len.min(ip.len());
    let l4 = &ip[ihl..end];
    let (protocol, hdr_len) = match proto {
        6 if l4.len() >= 20 => (Protocol::Tcp, usize::from(l4[12] >> 4) * 4),
        17 if l4.len() >= 8 => (Protocol::Udp, 8),
        _ => return Some(opaque(frame, proto, src, dst)),
    };
    if hdr_len < protocol.header_len() || hdr_len > l4.len() {
        return Some(opaque(frame, proto, src, dst));
    }
    Some(Packet {
        ts: Timestamp::default(),
        src_addr: src,
        dst_addr: dst,
        src_port: u16::from_be_bytes([l4[0], l4[1]]),
        dst_port: u16::from_be_bytes([l4[2], l4[3]]),
        protocol,
        payload: l4[hdr_len..].to_vec(),
    })
}

/// Serializes a capture as a little-endian v2.4 pcap file.
///
/// TCP and UDP packets are framed with synthesized headers: Ethernet when the
/// capture's link type is Ethernet, bare IPv4 otherwise. Other packets are
/// written verbatim.
pub fn write_pcap(capture: &CaptureFile) -> Vec<u8> {
    let body: usize = capture
        .packets
        .iter()
        .map(|p| RECORD_HEADER_LEN + p.ip_len() + ETH_HEADER_LEN)
        .sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + body);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&SNAPLEN.to_le_bytes());
    out.extend_from_slice(&capture.link_type.to_le_bytes());

    let mut frame = Vec::new();
    for p in &capture.packets {
        frame.clear();
        encode_frame(capture.link_type, p, &mut frame);
        let len = frame.len() as u32;
        out.extend_from_slice(&p.ts.sec.to_le_bytes());
        out.extend_from_slice(&p.ts.usec.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&frame);
    }
    out
}

fn encode_frame(link_type: u32, p: &Packet, out: &mut Vec<u8>) {
    if !p.protocol.is_transport() {
        out.extend_from_slice(&p.payload);
        return;
    }
    if link_type == LINKTYPE_ETHERNET {
        out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01]);
        out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    }
    let total_len = p.ip_len() as u16;
    let ip_start = out.len();
    out.extend_from_slice(&[0x45, 0]);
    out.extend_from_slice(&total_len.to_be_bytes());
    out.extend_from_slice(&[0, 0, 0x40, 0, 64, p.protocol.ip_number(), 0, 0]);
    out.extend_from_slice(&p.src_addr.octets());
    out.extend_from_slice(&p.dst_addr.octets());
    let csum = ipv4_checksum(&out[ip_start..ip_start + 20]);
    out[ip_start + 10..ip_start + 12].copy_from_slice(&csum.to_be_bytes());

    out.extend_from_slice(&p.src_port.to_be_bytes());
    out.extend_from_slice(&p.dst_port.to_be_bytes());
    match p.protocol {
        Protocol::Udp => {
            let udp_len = (8 + p.payload.len()) as u16;
            out.extend_from_slice(&udp_len.to_be_bytes());
            out.extend_from_slice(&[0, 0]);
        }
        Protocol::Tcp => {
            out.extend_from_slice(&[0; 8]); // seq, ack
            out.extend_from_slice(&[0x50, 0x18, 0xFF, 0xFF, 0, 0, 0, 0]);
        }
        Protocol::Other(_) => unreachable!(),
    }
    out.extend_from_slice(&p.payload);
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}
