//! Fixtures shared by the benchmarks.

use paloma_core::InputAssignment;

/// One `a`, `m` copies of `b` and `m` of `c`: a true product equality on
/// `2m + 1` agents.
pub fn mult_true(m: usize) -> InputAssignment {
    InputAssignment::from_counts(&[("a", 1), ("b", m), ("c", m)])
}

/// `k` agents holding `1` and one holding `0`.
pub fn pow2_inputs(k: usize) -> InputAssignment {
    InputAssignment::from_counts(&[("1", k), ("0", 1)])
}
