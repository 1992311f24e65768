//! Lifting SDD matrices with positive off-diagonals to SDDM matrices of
//! twice the dimension.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{check_len, Error, Result};
use crate::sddm::validate_sddm;
use crate::sparse::SparseSymMatrix;

/// `S = [[D + A_n, -A_p], [-A_p, D + A_n]]` where `D + A_n + A_p` splits
/// the input into diagonal, negative and positive off-diagonal parts.
#[derive(Debug, Clone, PartialEq)]
pub struct GrembanLift {
    pub s: SparseSymMatrix,
    n: usize,
}

impl GrembanLift {
    /// Dimension of the original matrix.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        gremban_project(v, self.n)
    }

    pub fn lift_vector(&self, h: &[f64]) -> Result<Vec<f64>> {
        lift_vector(h, self.n)
    }
}

pub fn gremban_lift(lambda: &SparseSymMatrix) -> Result<GrembanLift> {
    validate_sddm(lambda).require_sdd()?;
    let n = lambda.n();
    let mut t = Vec::with_capacity(2 * lambda.nnz());
    for (i, j, v) in lambda.entries() {
        if i == j || v < 0.0 {
            t.push((i, j, v));
            t.push((n + i, n + j, v));
        } else {
            t.push((i, n + j, -v));
            t.push((j, n + i, -v));
        }
    }
    Ok(GrembanLift {
        s: SparseSymMatrix::from_summed_triplets(2 * n, t)?,
        n,
    })
}

/// Recovers the original matrix from a lift `S` of dimension `2n`.
pub fn unlift(s: &SparseSymMatrix) -> Result<SparseSymMatrix> {
    if s.n() % 2 != 0 {
        return Err(Error::InvalidParams(format!("a lift has even dimension, got {}", s.n())));
    }
    let n = s.n() / 2;
    let t: Vec<(usize, usize, f64)> = s
        .entries()
        .filter_map(|(i, j, v)| match (i < n, j < n) {
            (true, true) => Some((i, j, v)),
            // each positive entry appears as both (i, n+j) and (j, n+i)
            (true, false) if i < j - n => Some((i, j - n, -v)),
            _ => None,
        })
        .collect();
    SparseSymMatrix::from_summed_triplets(n, t)
}

/// `(v_i - v_{n+i}) / sqrt(2)` for a vector of length `2n`.
pub fn gremban_project(v: &[f64], n: usize) -> Result<Vec<f64>> {
    check_len(2 * n, v.len())?;
    Ok((0..n).map(|i| (v[i] - v[n + i]) * FRAC_1_SQRT_2).collect())
}

/// Adjoint of [`gremban_project`]: `[h; -h] / sqrt(2)`.
pub fn lift_vector(h: &[f64], n: usize) -> Result<Vec<f64>> {
    check_len(n, h.len())?;
    let mut out: Vec<f64> = h.iter().map(|x| x * FRAC_1_SQRT_2).collect();
    out.extend(h.iter().map(|x| -x * FRAC_1_SQRT_2));
    Ok(out)
}
