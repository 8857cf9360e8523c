//! Thread-local arithmetic operation counter.
//!
//! The retargeting path must run in a fixed, input-independent number of
//! arithmetic operations. Hot functions charge a block cost here; tests
//! assert the total is identical across inputs.

use std::cell::Cell;

thread_local! {
    static OPS: Cell<u64> = const { Cell::new(0) };
}

pub fn reset() {
    OPS.with(|c| c.set(0));
}

pub fn count() -> u64 {
    OPS.with(|c| c.get())
}

pub(crate) fn add(n: u64) {
    OPS.with(|c| c.set(c.get() + n));
}
