//! Diagonal-dominance certificates, condition-number estimates and the
//! normalization `c M = I - X`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::lanczos_bounds;
use crate::sparse::SparseSymMatrix;

/// Row-wise dominance summary of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SddmCertificate {
    /// Strictly dominant rows and no positive off-diagonal.
    pub is_sddm: bool,
    /// Strictly dominant rows; off-diagonal signs unrestricted.
    pub is_sdd: bool,
    /// `m_ii - sum_{j != i} |m_ij|` per row.
    pub row_slack: Vec<f64>,
    pub min_slack: f64,
    pub max_diag: f64,
    pub positive_offdiag: usize,
}

impl SddmCertificate {
    /// Human-readable reason the matrix is not SDDM, if any.
    pub fn violation(&self) -> Option<String> {
        if self.positive_offdiag > 0 {
            return Some(format!(
                "{} positive off-diagonal entries",
                self.positive_offdiag
            ));
        }
        self.dominance_violation()
    }

    fn dominance_violation(&self) -> Option<String> {
        let (row, slack) = self
            .row_slack
            .iter()
            .cloned()
            .enumerate()
            .find(|&(_, s)| s.is_nan() || s <= 0.0)?;
        Some(format!("row {row} has slack {slack} (strict dominance required)"))
    }

    pub fn require_sddm(&self) -> Result<()> {
        match self.violation() {
            None => Ok(()),
            Some(msg) => Err(Error::NotSddm(msg)),
        }
    }

    pub fn require_sdd(&self) -> Result<()> {
        match self.dominance_violation() {
            None => Ok(()),
            Some(msg) => Err(Error::NotSdd(msg)),
        }
    }
}

/// Dominance certificate. Symmetry and finiteness are guaranteed by
/// [`SparseSymMatrix`] construction, so this cannot fail.
pub fn validate_sddm(a: &SparseSymMatrix) -> SddmCertificate {
    let diag = a.diag();
    let off = a.offdiag_abs_sums();
    let row_slack: Vec<f64> = diag.iter().zip(&off).map(|(d, o)| d - o).collect();
    let positive_offdiag = a.entries().filter(|&(i, j, v)| i != j && v > 0.0).count();
    let min_slack = row_slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_diag = diag.iter().cloned().fold(0.0f64, f64::max);
    let is_sdd = !row_slack.is_empty() && row_slack.iter().all(|&s| s > 0.0);
    SddmCertificate {
        is_sddm: is_sdd && positive_offdiag == 0,
        is_sdd,
        row_slack,
        min_slack,
        max_diag,
        positive_offdiag,
    }
}

/// Condition-number estimate with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    /// `2 * lambda_max / lambda_min_lower`.
    pub value: f64,
    pub lambda_max: f64,
    pub lambda_min_lower: f64,
    pub lanczos_steps: usize,
}

/// Krylov steps used by [`kappa_estimate`].
pub const KAPPA_LANCZOS_STEPS: usize = 120;

/// Upper estimate of `kappa(M)` for an SDDM matrix.
///
/// `lambda_max` comes from Lanczos, floored at the largest diagonal entry
/// (a Rayleigh quotient, hence a certified lower bound on `lambda_max`).
/// `lambda_min_lower` is the larger of the Gershgorin slack bound and half
/// the smallest Ritz value. Diagonal matrices get their exact ratio.
pub fn kappa_estimate(m: &SparseSymMatrix, cert: &SddmCertificate) -> Result<KappaEstimate> {
    cert.require_sddm()?;
    if m.is_diagonal() {
        let d = m.diag();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0f64, f64::max);
        return Ok(KappaEstimate {
            value: hi / lo,
            lambda_max: hi,
            lambda_min_lower: lo,
            lanczos_steps: 0,
        });
    }
    let b = lanczos_bounds(m, KAPPA_LANCZOS_STEPS, 0x6b61_7070_61);
    if !(b.max.is_finite() && b.min.is_finite()) {
        return Err(Error::NoConvergence {
            what: "Lanczos extreme eigenvalues",
            best: b.max,
        });
    }
    let lambda_max = b.max.max(cert.max_diag);
    let lambda_min_lower = cert.min_slack.max(0.5 * b.min);
    Ok(KappaEstimate {
        value: 2.0 * lambda_max / lambda_min_lower,
        lambda_max,
        lambda_min_lower,
        lanczos_steps: b.steps,
    })
}

/// `c M = I - X` with `X` entrywise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub c: f64,
    pub x: SparseSymMatrix,
    /// The `kappa` actually used, `max(2, estimate)`.
    pub kappa_bound: f64,
}

impl Splitting {
    pub fn from_parts(c: f64, x: SparseSymMatrix, kappa_bound: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParams(format!("scale c = {c} must be positive")));
        }
        if x.nnz() > 0 && x.min_value() < 0.0 {
            return Err(Error::InvalidParams("X has a negative entry".into()));
        }
        Ok(Splitting { c, x, kappa_bound })
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }
}

/// Normalizes with an explicit `kappa` (clamped below at 2).
pub fn normalize_with_kappa(m: &SparseSymMatrix, cert: &SddmCertificate, kappa: f64) -> Result<Splitting> {
    cert.require_sddm()?;
    let kappa = kappa.max(2.0);
    let c = (1.0 - 1.0 / kappa) / cert.max_diag;
    let x = SparseSymMatrix::from_summed_triplets(
        m.n(),
        m.entries()
            .map(|(i, j, v)| (i, j, if i == j { 1.0 - c * v } else { -c * v }))
            .chain((0..m.n()).map(|i| (i, i, 0.0))),
    )?;
    Ok(Splitting {
        c,
        x,
        kappa_bound: kappa,
    })
}

/// Normalizes an SDDM matrix using [`kappa_estimate`].
pub fn normalize(m: &SparseSymMatrix, cert: &SddmCertificate) -> Result<Splitting> {
    let k = kappa_estimate(m, cert)?;
    normalize_with_kappa(m, cert, k.value)
}
