/// 32-bit xorshift generator (13/17/5 triple).
///
/// Fully specified so that a 16-bit seed carried in a recovery header
/// regenerates the same keystream on any platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u32,
}

impl Prng {
    /// Substitute for the all-zero state, which xorshift cannot leave.
    pub const ZERO_SEED_REMAP: u32 = 0x9E37_79B9;

    pub fn new(seed: u32) -> Self {
        Prng {
            state: if seed == 0 { Self::ZERO_SEED_REMAP } else { seed },
        }
    }

    /// Folds a 64-bit session seed into the 32-bit state.
    pub fn from_seed64(seed: u64) -> Self {
        Self::new((seed ^ (seed >> 32)) as u32)
    }

    pub fn next_u32(&mut self) -> u32 {
        let mut x = self.state;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.state = x;
        x
    }

    pub fn next_u16(&mut self) -> u16 {
        (self.next_u32() >> 16) as u16
    }

    /// Uniform draw from `lo..=hi` by multiply-shift reduction.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        lo + ((u64::from(self.next_u32()) * span) >> 32)
    }

    /// Fills `buf` with generator output, four little-endian bytes per step.
    pub fn fill(&mut self, buf: &mut [u8]) {
        for chunk in buf.chunks_mut(4) {
            let word = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
    }
}
