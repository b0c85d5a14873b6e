//! Thread-local multiply-add counter.
//!
//! `matmul` and the pairwise-distance kernels report their multiply-add
//! volume here; element-wise work (bias adds, layernorm, softmax, GELU,
//! cluster means, refinement averages) is not counted. The harness resets
//! the counter around a forward pass and checks the total against the
//! closed-form cost model, so the two sides must count the same things.

use std::cell::Cell;

thread_local! {
    static MADDS: Cell<u64> = const { Cell::new(0) };
}

/// Reset the current thread's counter to zero.
pub fn reset() {
    MADDS.with(|c| c.set(0));
}

/// Multiply-adds recorded on the current thread since the last reset.
pub fn total() -> u64 {
    MADDS.with(|c| c.get())
}

pub(crate) fn add(n: u64) {
    MADDS.with(|c| c.set(c.get() + n));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_clears_total() {
        add(42);
        assert!(total() >= 42);
        reset();
        assert_eq!(total(), 0);
    }
}
