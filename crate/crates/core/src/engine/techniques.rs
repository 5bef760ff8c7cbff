//! Body-level forward and inverse transforms. Each forward transform returns
//! the recovery header(s) describing it, outermost first.

use super::{EngineError, Prng, RecoveryHeader, TechniqueId};
use crate::packet::MAX_PAYLOAD;

/// Appends `pad_min..=pad_max` generator bytes.
pub fn apply_padding(body: &mut Vec<u8>, pad_min: u32, pad_max: u32, prng: &mut Prng) -> RecoveryHeader {
    let pad_len = prng.range_inclusive(u64::from(pad_min), u64::from(pad_max)) as usize;
    let start = body.len();
    body.resize(start + pad_len, 0);
    prng.fill(&mut body[start..]);
    RecoveryHeader::new(TechniqueId::Padding, pad_len as u16)
}

pub fn remove_padding(body: &mut Vec<u8>, pad_len: u16) -> Result<(), EngineError> {
    let pad_len = usize::from(pad_len);
    if pad_len > body.len() {
        return Err(EngineError::SeqDesync(format!(
            "pad length {pad_len} exceeds body of {} bytes",
            body.len()
        )));
    }
    body.truncate(body.len() - pad_len);
    Ok(())
}

/// XORs `buf` with the keystream derived from a 16-bit seed and the buffer length.
pub fn xor_keystream(buf: &mut [u8], seed16: u16) {
    let mut ks = Prng::new(u32::from(seed16) << 16 | (buf.len() as u32 & 0xFFFF));
    for chunk in buf.chunks_mut(4) {
        let word = ks.next_u32().to_le_bytes();
        for (b, k) in chunk.iter_mut().zip(word) {
            *b ^= k;
        }
    }
}

pub fn apply_pad_xor(
    body: &mut Vec<u8>,
    pad_min: u32,
    pad_max: u32,
    prng: &mut Prng,
) -> [RecoveryHeader; 2] {
    let pad = apply_padding(body, pad_min, pad_max, prng);
    let seed = prng.next_u16();
    xor_keystream(body, seed);
    [RecoveryHeader::new(TechniqueId::PadXor, seed), pad]
}

pub fn apply_pad_shift(
    body: &mut Vec<u8>,
    pad_min: u32,
    pad_max: u32,
    prng: &mut Prng,
) -> [RecoveryHeader; 2] {
    let pad = apply_padding(body, pad_min, pad_max, prng);
    let r = prng.range_inclusive(0, body.len() as u64 - 1) as usize;
    body.rotate_left(r);
    [RecoveryHeader::new(TechniqueId::PadShift, r as u16), pad]
}

pub fn undo_shift(body: &mut [u8], r: u16) -> Result<(), EngineError> {
    let r = usize::from(r);
    if r >= body.len().max(1) {
        return Err(EngineError::SeqDesync(format!(
            "rotation {r} out of range for {} bytes",
            body.len()
        )));
    }
    body.rotate_right(r);
    Ok(())
}

/// Pads with zeros up to the running maximum length, which it updates.
pub fn apply_const_pad(body: &mut Vec<u8>, running_max: &mut usize) -> Result<RecoveryHeader, EngineError> {
    let orig = body.len();
    let target = (*running_max).max(orig);
    if target + super::HEADER_LEN > MAX_PAYLOAD {
        return Err(EngineError::Oversize(target + super::HEADER_LEN));
    }
    *running_max = target;
    body.resize(target, 0);
    Ok(RecoveryHeader::new(TechniqueId::ConstPad, orig as u16))
}

pub fn remove_const_pad(body: &mut Vec<u8>, orig_len: u16) -> Result<(), EngineError> {
    let orig_len = usize::from(orig_len);
    if orig_len > body.len() {
        return Err(EngineError::SeqDesync(format!(
            "original length {orig_len} exceeds body of {} bytes",
            body.len()
        )));
    }
    body.truncate(orig_len);
    Ok(())
}

/// Splits a body in two at a uniform point in `1..len`. `None` when the
/// body is shorter than two bytes.
pub fn split_fragments(body: &[u8], prng: &mut Prng) -> Option<(Vec<u8>, Vec<u8>)> {
    if body.len() < 2 {
        return None;
    }
    let s = prng.range_inclusive(1, body.len() as u64 - 1) as usize;
    Some((body[..s].to_vec(), body[s..].to_vec()))
}

/// Packs a 15-bit group id and a fragment index into a header parameter.
pub fn fragment_param(group: u16, index: u8) -> u16 {
    (group & 0x7FFF) << 1 | u16::from(index & 1)
}

pub fn fragment_fields(param: u16) -> (u16, u8) {
    (param >> 1, (param & 1) as u8)
}

pub fn sample_delay_us(prng: &mut Prng, min_us: u64, max_us: u64) -> u64 {
    prng.range_inclusive(min_us, max_us)
}
