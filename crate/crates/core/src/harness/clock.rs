use crate::packet::Timestamp;

/// Simulated time, moved forward only by packet timestamps and injected
/// delays.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now: Timestamp,
}

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        VirtualClock { now: start }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Moves to `ts` if it lies ahead; earlier timestamps are ignored.
    pub fn advance_to(&mut self, ts: Timestamp) -> Timestamp {
        self.now = self.now.max(ts);
        self.now
    }

    pub fn advance_by(&mut self, micros: u64) -> Timestamp {
        self.now = self.now.add_micros(micros);
        self.now
    }
}
