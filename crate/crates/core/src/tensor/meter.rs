//! Process-wide accounting of live tensor buffer bytes.
//!
//! Every [`Tensor`](super::Tensor) registers its buffer here on creation and
//! deregisters on drop, so `peak_bytes` is the high-water mark of tensor
//! memory. This is the engine's stand-in for peak device memory.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct AllocationMeter {
    live: AtomicU64,
    peak: AtomicU64,
}

static GLOBAL: AllocationMeter = AllocationMeter::new();

/// The meter every tensor reports to.
pub fn global() -> &'static AllocationMeter {
    &GLOBAL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeterSnapshot {
    pub live_bytes: u64,
    pub peak_bytes: u64,
}

impl AllocationMeter {
    pub const fn new() -> Self {
        Self {
            live: AtomicU64::new(0),
            peak: AtomicU64::new(0),
        }
    }

    pub fn live_bytes(&self) -> u64 {
        self.live.load(Ordering::SeqCst)
    }

    pub fn peak_bytes(&self) -> u64 {
        // Read live after peak: a concurrent allocation between the two loads
        // must not make the pair look like peak < live.
        let peak = self.peak.load(Ordering::SeqCst);
        peak.max(self.live_bytes())
    }

    pub fn snapshot(&self) -> MeterSnapshot {
        let peak = self.peak_bytes();
        MeterSnapshot {
            live_bytes: self.live_bytes(),
            peak_bytes: peak,
        }
    }

    /// Opens a new measurement window: the peak restarts from the current
    /// live total.
    pub fn reset_peak(&self) {
        self.peak.store(self.live_bytes(), Ordering::SeqCst);
    }

    pub(crate) fn record_alloc(&self, bytes: u64) {
        let now = self.live.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub(crate) fn record_free(&self, bytes: u64) {
        self.live.fetch_sub(bytes, Ordering::SeqCst);
    }
}
