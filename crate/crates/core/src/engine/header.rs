//! The 4-byte recovery header and its placement inside obfuscated payloads.
//!
//! Wire layout:
//!
//! ```text
//! byte 0   : technique (bits 7..5) | chain flag (bit 4) | reserved (bits 3..0, zero)
//! byte 1-2 : technique parameter, big-endian
//! byte 3   : byte0 ^ param_hi ^ param_lo ^ 0xA5
//! ```

use std::fmt;
use std::str::FromStr;

use super::EngineError;

pub const HEADER_LEN: usize = 4;

const CHECKSUM_SALT: u8 = 0xA5;
const FNV_OFFSET_BASIS: u32 = 0x811C_9DC5;
const FNV_PRIME: u32 = 0x0100_0193;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum TechniqueId {
    Padding = 0,
    PadXor = 1,
    PadShift = 2,
    ConstPad = 3,
    Fragment = 4,
    Delay = 5,
}

impl TechniqueId {
    pub const ALL: [TechniqueId; 6] = [
        TechniqueId::Padding,
        TechniqueId::PadXor,
        TechniqueId::PadShift,
        TechniqueId::ConstPad,
        TechniqueId::Fragment,
        TechniqueId::Delay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TechniqueId::Padding => "padding",
            TechniqueId::PadXor => "pad_xor",
            TechniqueId::PadShift => "pad_shift",
            TechniqueId::ConstPad => "const_pad",
            TechniqueId::Fragment => "fragment",
            TechniqueId::Delay => "delay",
        }
    }

    /// Human-readable label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            TechniqueId::Padding => "Padding",
            TechniqueId::PadXor => "Padding and XORing",
            TechniqueId::PadShift => "Padding and Shifting",
            TechniqueId::ConstPad => "Constant Size Padding",
            TechniqueId::Fragment => "Fragmentation",
            TechniqueId::Delay => "Delay Randomization",
        }
    }

    /// Number of recovery headers one application splices in.
    pub fn header_count(self) -> usize {
        match self {
            TechniqueId::PadXor | TechniqueId::PadShift => 2,
            TechniqueId::Delay => 0,
            _ => 1,
        }
    }
}

impl TryFrom<u8> for TechniqueId {
    type Error = EngineError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        TechniqueId::ALL
            .get(usize::from(v))
            .copied()
            .ok_or(EngineError::BadTechnique(v))
    }
}

impl FromStr for TechniqueId {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let id = match norm.as_str() {
            "padding" | "pad" => TechniqueId::Padding,
            "pad_xor" | "padding_xor" | "xor" => TechniqueId::PadXor,
            "pad_shift" | "padding_shift" | "shift" => TechniqueId::PadShift,
            "const_pad" | "constant_size_padding" | "constant" => TechniqueId::ConstPad,
            "fragment" | "fragmentation" => TechniqueId::Fragment,
            "delay" | "delay_randomization" => TechniqueId::Delay,
            _ => return Err(EngineError::Profile(format!("unknown technique '{}'", s.trim()))),
        };
        Ok(id)
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RecoveryHeader {
    pub technique: TechniqueId,
    /// Another header follows once this one has been reversed.
    pub chain: bool,
    pub reserved: u8,
    pub param: u16,
}

impl RecoveryHeader {
    pub fn new(technique: TechniqueId, param: u16) -> Self {
        RecoveryHeader {
            technique,
            chain: false,
            reserved: 0,
            param,
        }
    }

    pub fn chained(mut self, chain: bool) -> Self {
        self.chain = chain;
        self
    }

    pub fn encode(&self) -> Result<[u8; HEADER_LEN], EngineError> {
        if self.reserved != 0 {
            return Err(EngineError::ReservedBitsSet);
        }
        let b0 = (self.technique as u8) << 5 | u8::from(self.chain) << 4;
        let [hi, lo] = self.param.to_be_bytes();
        Ok([b0, hi, lo, b0 ^ hi ^ lo ^ CHECKSUM_SALT])
    }

    /// Validates checksum, then reserved bits, then the technique id.
    pub fn decode(b: [u8; HEADER_LEN]) -> Result<Self, EngineError> {
        if b[0] ^ b[1] ^ b[2] ^ CHECKSUM_SALT != b[3] {
            return Err(EngineError::ChecksumMismatch);
        }
        if b[0] & 0x0F != 0 {
            return Err(EngineError::ReservedBitsSet);
        }
        Ok(RecoveryHeader {
            technique: TechniqueId::try_from(b[0] >> 5)?,
            chain: b[0] & 0x10 != 0,
            reserved: 0,
            param: u16::from_be_bytes([b[1], b[2]]),
        })
    }
}

fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u32::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Splice position of the first recovery header in a payload of `obf_len`
/// bytes (headers included). Always in `0..=obf_len - 4`.
pub fn header_offset(obf_len: usize, seq: u32) -> Result<usize, EngineError> {
    if obf_len < HEADER_LEN {
        return Err(EngineError::LengthTooSmall(obf_len));
    }
    let mut input = [0u8; 8];
    input[..4].copy_from_slice(&(obf_len as u32).to_be_bytes());
    input[4..].copy_from_slice(&seq.to_be_bytes());
    let modulus = (obf_len - HEADER_LEN + 1) as u64;
    Ok((u64::from(fnv1a32(&input)) % modulus) as usize)
}

/// Inserts the header block (outermost header first) into `body`.
///
/// The block starts at [`header_offset`] of the final length. A block that
/// would run past the end wraps around to the start of the payload, so any
/// number of chained headers fits; the body keeps its byte order in the
/// remaining positions.
pub fn splice(body: &[u8], headers: &[RecoveryHeader], seq: u32) -> Result<Vec<u8>, EngineError> {
    let mut block = Vec::with_capacity(headers.len() * HEADER_LEN);
    for (i, h) in headers.iter().enumerate() {
        block.extend_from_slice(&h.chained(i + 1 < headers.len()).encode()?);
    }
    let total = body.len() + block.len();
    let off = header_offset(total, seq)?;
    let mut out = Vec::with_capacity(total);
    if off + block.len() <= total {
        out.extend_from_slice(&body[..off]);
        out.extend_from_slice(&block);
        out.extend_from_slice(&body[off..]);
    } else {
        let head = total - off;
        out.extend_from_slice(&block[head..]);
        out.extend_from_slice(body);
        out.extend_from_slice(&block[..head]);
    }
    Ok(out)
}

/// Inverse of [`splice`]: returns the headers (outermost first) and the body.
pub fn unsplice(obf: &[u8], seq: u32) -> Result<(Vec<RecoveryHeader>, Vec<u8>), EngineError> {
    let total = obf.len();
    let off = header_offset(total, seq)?;
    let at = |i: usize| obf[(off + i) % total];
    let mut headers = Vec::new();
    loop {
        let start = headers.len() * HEADER_LEN;
        if start + HEADER_LEN > total {
            return Err(EngineError::SeqDesync(format!(
                "header chain longer than the {total}-byte payload"
            )));
        }
        let h = RecoveryHeader::decode([at(start), at(start + 1), at(start + 2), at(start + 3)])?;
        headers.push(h);
        if !h.chain {
            break;
        }
    }
    let block = headers.len() * HEADER_LEN;
    let body = if off + block <= total {
        let mut b = Vec::with_capacity(total - block);
        b.extend_from_slice(&obf[..off]);
        b.extend_from_slice(&obf[off + block..]);
        b
    } else {
        obf[off + block - total..off].to_vec()
    };
    Ok((headers, body))
}
