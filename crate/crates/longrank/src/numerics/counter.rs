//! Thread-local instrumentation counters.
//!
//! The FLOP counter follows one fixed convention everywhere:
//! a multiply-add costs [`FLOPS_PER_MAC`] = 2, element-wise nonlinearities
//! (sigmoid, the exp/normalize in softmax, the layer-norm normalizer) cost
//! [`FLOPS_PER_ACTIVATION`] = 5 per element, and plain element-wise
//! arithmetic costs 1 per element. The analytic cost model mirrors the same
//! constants, so measured and modeled counts can be compared directly.
//!
//! The allocation counter tracks matrix buffers in scalar entries and keeps
//! the largest single allocation, which is what the padding-free guarantee
//! bounds. The encoder counter records one tick per encoded user history.

use std::cell::Cell;

pub const FLOPS_PER_MAC: u64 = 2;
pub const FLOPS_PER_ACTIVATION: u64 = 5;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
    static ALLOC_ENTRIES: Cell<u64> = const { Cell::new(0) };
    static MAX_SINGLE_ALLOC: Cell<u64> = const { Cell::new(0) };
    static ENCODER_INVOCATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Reset every counter on this thread.
pub fn reset() {
    FLOPS.with(|c| c.set(0));
    ALLOC_ENTRIES.with(|c| c.set(0));
    MAX_SINGLE_ALLOC.with(|c| c.set(0));
    ENCODER_INVOCATIONS.with(|c| c.set(0));
}

pub fn add_flops(n: u64) {
    FLOPS.with(|c| c.set(c.get() + n));
}

pub fn add_macs(n: u64) {
    add_flops(n * FLOPS_PER_MAC);
}

pub fn flops() -> u64 {
    FLOPS.with(Cell::get)
}

/// Multiply-adds recorded so far, in MAC units.
pub fn macs() -> u64 {
    flops() / FLOPS_PER_MAC
}

pub fn add_alloc_entries(n: u64) {
    ALLOC_ENTRIES.with(|c| c.set(c.get() + n));
    MAX_SINGLE_ALLOC.with(|c| c.set(c.get().max(n)));
}

pub fn alloc_entries() -> u64 {
    ALLOC_ENTRIES.with(Cell::get)
}

/// Largest single buffer allocated since the last reset, in entries.
pub fn max_single_alloc() -> u64 {
    MAX_SINGLE_ALLOC.with(Cell::get)
}

pub fn add_encoder_invocation() {
    ENCODER_INVOCATIONS.with(|c| c.set(c.get() + 1));
}

pub fn encoder_invocations() -> u64 {
    ENCODER_INVOCATIONS.with(Cell::get)
}

/// Run `f` and return its result together with the FLOPs it consumed.
pub fn measure_flops<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = flops();
    let out = f();
    (out, flops() - before)
}

/// Run `f` and return its result together with the entries it allocated.
pub fn measure_alloc<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = alloc_entries();
    let out = f();
    (out, alloc_entries() - before)
}
