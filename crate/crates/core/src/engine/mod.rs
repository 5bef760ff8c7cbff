//! Reversible packet obfuscation.
//!
//! Six techniques (padding, padding+XOR, padding+rotation, constant-size
//! padding, two-way fragmentation, delay) are applied by an [`Obfuscator`]
//! and undone by a [`Deobfuscator`]. Every payload-changing technique leaves
//! 4-byte [`RecoveryHeader`]s spliced in at a position both ends derive from
//! the observed length and a mirrored per-flow counter.

mod header;
mod prng;
mod profile;
mod session;
pub mod techniques;

use thiserror::Error;

pub use header::{header_offset, splice, unsplice, RecoveryHeader, TechniqueId, HEADER_LEN};
pub use prng::Prng;
pub use profile::{parse_chain, ObfuscationProfile};
pub use session::{
    session_salt, Deobfuscator, FlowSeqState, FragmentPart, Obfuscator, Reassembler, Recovered,
    REASSEMBLY_HORIZON,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("payload of {0} bytes is too small to hold a recovery header")]
    LengthTooSmall(usize),
    #[error("recovery header checksum mismatch")]
    ChecksumMismatch,
    #[error("recovery header has reserved bits set")]
    ReservedBitsSet,
    #[error("unknown technique id {0}")]
    BadTechnique(u8),
    #[error("obfuscated payload of {0} bytes exceeds the 65500-byte limit")]
    Oversize(usize),
    #[error("fragment group {0} never completed")]
    OrphanFragment(u16),
    #[error("receiver out of sync: {0}")]
    SeqDesync(String),
    #[error("profile error: {0}")]
    Profile(String),
}
