//! Shared fixtures for the kernel benchmarks.

use sddmfac::{gen, normalize, validate_sddm, SparseSymMatrix, Splitting};

/// `side x side` grid with slack 0.1 and its splitting.
pub fn grid(side: usize) -> (SparseSymMatrix, Splitting) {
    let m = gen::grid2d(side, 0.1).expect("valid grid");
    let split = normalize(&m, &validate_sddm(&m)).expect("grids are SDDM");
    (m, split)
}

/// Deterministic dense-ish test vector.
pub fn vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect()
}
