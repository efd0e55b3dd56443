//! Per-thread invocation counters for the expensive once-per-style stages.
//!
//! Rendering must never trigger feature transfer or decoding; tests read
//! these counters around render loops to check that.

use std::cell::Cell;

thread_local! {
    static ADAIN: Cell<u64> = const { Cell::new(0) };
    static DECODE: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn bump_adain() {
    ADAIN.with(|c| c.set(c.get() + 1));
}

pub(crate) fn bump_decode() {
    DECODE.with(|c| c.set(c.get() + 1));
}

/// Number of `adain_transfer` calls made on this thread.
pub fn adain_calls() -> u64 {
    ADAIN.with(Cell::get)
}

/// Number of `decode` calls made on this thread.
pub fn decode_calls() -> u64 {
    DECODE.with(Cell::get)
}
