//! Thread-local FLOP accounting.
//!
//! Matrix primitives record their analytic operation counts here, once per
//! call on the calling thread. This gives an exact cost model for the
//! complexity assertions without instrumenting inner loops.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

pub fn reset() {
    FLOPS.with(|f| f.set(0));
}

pub fn count() -> u64 {
    FLOPS.with(|f| f.get())
}

pub fn add(n: u64) {
    FLOPS.with(|f| f.set(f.get().wrapping_add(n)));
}
