//! Factor operators `C̃` with `C̃ C̃ᵀ ≈ M^p`: plain chains, refined inverse
//! factors and edge-based factors with one column per edge and slack row.

use serde::{Deserialize, Serialize};

use crate::chain::{build_chain, FactorChain};
use crate::error::{check_len, Error, Result};
use crate::maclaurin::MaclaurinPoly;
use crate::operator::{lanczos_bounds, FnOperator};
use crate::oracle::{mat_mul, transpose, DenseSym};
use crate::sddm::{normalize, validate_sddm, Splitting};
use crate::sparse::SparseSymMatrix;
use crate::sparsify::SparsifyParams;

/// A linear map `C̃ : R^{input_dim} → R^{output_dim}`.
pub trait Factor: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `C̃ v`; `v` has length `input_dim()`.
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64>;
    /// `C̃ᵀ v`; `v` has length `output_dim()`.
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64>;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), v.len())?;
        Ok(self.apply_unchecked(v))
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.output_dim(), v.len())?;
        Ok(self.apply_transpose_unchecked(v))
    }

    /// Row-major `output_dim x input_dim` matrix, one product per column.
    fn to_dense_matrix(&self) -> Vec<f64> {
        let (r, c) = (self.output_dim(), self.input_dim());
        let mut out = vec![0.0; r * c];
        let mut e = vec![0.0; c];
        for j in 0..c {
            e[j] = 1.0;
            let col = self.apply_unchecked(&e);
            for i in 0..r {
                out[i * c + j] = col[i];
            }
            e[j] = 0.0;
        }
        out
    }

    /// `C̃ C̃ᵀ` assembled densely.
    fn gram(&self) -> DenseSym {
        DenseSym::gram(&self.to_dense_matrix(), self.output_dim(), self.input_dim())
    }
}

impl Factor for FactorChain {
    fn input_dim(&self) -> usize {
        self.n()
    }
    fn output_dim(&self) -> usize {
        self.n()
    }
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        FactorChain::apply_unchecked(self, v)
    }
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        FactorChain::apply_transpose_unchecked(self, v)
    }
}

/// A dense square factor, mostly for tests and reference runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFactor {
    pub n: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl DenseFactor {
    /// Symmetric factor `M^{p/2}` so that `C Cᵀ = M^p` exactly.
    pub fn power_of(m: &DenseSym, p: f64) -> Result<Self> {
        let h = crate::oracle::dense_power(m, p / 2.0)?;
        Ok(DenseFactor {
            n: m.n(),
            values: h.as_slice().to_vec(),
        })
    }
}

impl Factor for DenseFactor {
    fn input_dim(&self) -> usize {
        self.n
    }
    fn output_dim(&self) -> usize {
        self.n
    }
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        mat_mul(&self.values, v, self.n, self.n, 1)
    }
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        mat_mul(&transpose(&self.values, self.n, self.n), v, self.n, self.n, 1)
    }
}

// ---------------------------------------------------------------------------
// Refinement

/// Spectral data behind a refinement polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineInfo {
    /// Ritz bounds on `Zᵀ M Z`.
    pub a_min: f64,
    pub a_max: f64,
    /// Spread `(a_max - a_min) / (a_max + a_min)` before padding.
    pub delta_measured: f64,
    /// Radius the polynomial is certified on.
    pub delta: f64,
    /// `s = 2 / (a_min + a_max)`.
    pub s: f64,
    pub lanczos_steps: usize,
}

/// `C̃ = √s · Z · T_{-1/2, t}(s Zᵀ M Z)` for a crude factor `Z` of `M⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined<F> {
    pub crude: F,
    pub m: SparseSymMatrix,
    pub poly: MaclaurinPoly,
    pub info: RefineInfo,
}

/// Krylov steps used to bound `Zᵀ M Z`.
pub const REFINE_LANCZOS_STEPS: usize = 80;

/// Padding applied to the measured spread when Lanczos did not exhaust the
/// Krylov space: the gap `1 - δ` shrinks by this factor.
pub const REFINE_GAP_SHRINK: f64 = 0.9;

fn zt_m_z<'a, F: Factor>(crude: &'a F, m: &'a SparseSymMatrix) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |x: &[f64], y: &mut [f64]| {
        let zx = crude.apply_unchecked(x);
        let mzx = m.mul_vec(&zx).expect("dimensions agree");
        y.copy_from_slice(&crude.apply_transpose_unchecked(&mzx));
    }
}

/// Bounds the spectrum of `Zᵀ M Z` and picks the scale and radius.
pub fn refine_info<F: Factor>(m: &SparseSymMatrix, crude: &F, delta: Option<f64>) -> Result<RefineInfo> {
    let n = crude.input_dim();
    check_len(m.n(), crude.output_dim())?;
    let op = FnOperator::new(n, zt_m_z(crude, m));
    let b = lanczos_bounds(&op, REFINE_LANCZOS_STEPS, 0x7265_6669_6e65);
    let (a_min, a_max) = (b.min, b.max);
    if !(a_min > 0.0 && a_max >= a_min && a_max.is_finite()) {
        return Err(Error::SpectrumEstimateFailed(format!(
            "Ritz bounds [{a_min:.3e}, {a_max:.3e}] for the preconditioned matrix"
        )));
    }
    let delta_measured = (a_max - a_min) / (a_max + a_min);
    let padded = if b.exhausted {
        delta_measured + 1e-6
    } else {
        1.0 - REFINE_GAP_SHRINK * (1.0 - delta_measured)
    };
    let delta = delta.unwrap_or(padded).max(1e-3);
    if delta >= 1.0 {
        return Err(Error::SpectrumEstimateFailed(format!(
            "spread {delta_measured:.4} too wide for a convergent series"
        )));
    }
    Ok(RefineInfo {
        a_min,
        a_max,
        delta_measured,
        delta,
        s: 2.0 / (a_min + a_max),
        lanczos_steps: b.steps,
    })
}

/// Refines a crude factor of `M⁻¹` to accuracy `eps`. `delta` overrides the
/// measured radius.
pub fn refine_inverse_factor<F: Factor>(
    m: &SparseSymMatrix,
    crude: F,
    eps: f64,
    delta: Option<f64>,
) -> Result<Refined<F>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParams(format!("eps = {eps} must be positive")));
    }
    let info = refine_info(m, &crude, delta)?;
    // the square of T doubles its error
    let poly = MaclaurinPoly::new(-0.5, info.delta, eps / 2.0);
    Ok(Refined {
        crude,
        m: m.clone(),
        poly,
        info,
    })
}

impl<F: Factor> Refined<F> {
    fn inner(&self, v: &[f64]) -> Vec<f64> {
        let op = FnOperator::new(self.crude.input_dim(), zt_m_z(&self.crude, &self.m));
        self.poly
            .apply_operator_poly(&op, (0.0, self.info.s), v)
            .expect("dimensions agree")
    }

    /// Same crude factor, new target accuracy.
    pub fn with_eps(&self, eps: f64) -> Refined<F>
    where
        F: Clone,
    {
        Refined {
            crude: self.crude.clone(),
            m: self.m.clone(),
            poly: MaclaurinPoly::new(-0.5, self.info.delta, eps / 2.0),
            info: self.info,
        }
    }
}

impl<F: Factor> Factor for Refined<F> {
    fn input_dim(&self) -> usize {
        self.crude.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.crude.output_dim()
    }
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.crude.apply_unchecked(&self.inner(v));
        let r = self.info.s.sqrt();
        w.iter_mut().for_each(|x| *x *= r);
        w
    }
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.inner(&self.crude.apply_transpose_unchecked(v));
        let r = self.info.s.sqrt();
        w.iter_mut().for_each(|x| *x *= r);
        w
    }
}

// ---------------------------------------------------------------------------
// Edge factor

/// `n x m'` matrix with columns `√|M_ij| (e_i - e_j)` for each edge and
/// `√a_i e_i` for each row with slack `a_i > 0`, so that `B Bᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFactor {
    pub n: usize,
    /// `(i, j, √|M_ij|)` with `i < j`.
    pub edges: Vec<(usize, usize, f64)>,
    /// `(i, √a_i)`.
    pub slacks: Vec<(usize, f64)>,
}

/// Requires an SDDM matrix (nonpositive off-diagonals).
pub fn edge_factor(m: &SparseSymMatrix) -> Result<EdgeFactor> {
    let cert = validate_sddm(m);
    cert.require_sddm()?;
    let edges = m
        .entries()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, v)| (i, j, v.abs().sqrt()))
        .collect();
    let slacks = cert
        .row_slack
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a > 0.0)
        .map(|(i, &a)| (i, a.sqrt()))
        .collect();
    Ok(EdgeFactor {
        n: m.n(),
        edges,
        slacks,
    })
}

impl EdgeFactor {
    /// Number of columns `m'`.
    pub fn columns(&self) -> usize {
        self.edges.len() + self.slacks.len()
    }

    pub fn max_column_nnz(&self) -> usize {
        if self.edges.is_empty() {
            usize::from(!self.slacks.is_empty())
        } else {
            2
        }
    }

    /// `B z` for `z` of length `m'`.
    pub fn apply_b(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (k, &(i, j, w)) in self.edges.iter().enumerate() {
            y[i] += w * z[k];
            y[j] -= w * z[k];
        }
        let off = self.edges.len();
        for (k, &(i, w)) in self.slacks.iter().enumerate() {
            y[i] += w * z[off + k];
        }
        y
    }

    /// `Bᵀ v` for `v` of length `n`.
    pub fn apply_bt(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.edges.iter().map(|&(i, j, w)| w * (v[i] - v[j])).collect();
        out.extend(self.slacks.iter().map(|&(i, w)| w * v[i]));
        out
    }

    /// Row-major `n x m'` matrix `B`.
    pub fn to_dense_matrix(&self) -> Vec<f64> {
        let cols = self.columns();
        let mut out = vec![0.0; self.n * cols];
        for (k, &(i, j, w)) in self.edges.iter().enumerate() {
            out[i * cols + k] = w;
            out[j * cols + k] = -w;
        }
        let off = self.edges.len();
        for (k, &(i, w)) in self.slacks.iter().enumerate() {
            out[i * cols + off + k] = w;
        }
        out
    }

    /// `B Bᵀ` as a sparse matrix.
    pub fn gram(&self) -> Result<SparseSymMatrix> {
        let mut t = Vec::new();
        for &(i, j, w) in &self.edges {
            let w2 = w * w;
            t.push((i, i, w2));
            t.push((j, j, w2));
            t.push((i, j, -w2));
        }
        for &(i, w) in &self.slacks {
            t.push((i, i, w * w));
        }
        SparseSymMatrix::from_summed_triplets(self.n, t)
    }
}

/// `C̃ = Z B` where `Z = F Fᵀ ≈ M⁻¹` comes from an inverse factor `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBased<F> {
    pub inverse: F,
    pub b: EdgeFactor,
}

impl<F: Factor> EdgeBased<F> {
    fn z(&self, v: &[f64]) -> Vec<f64> {
        self.inverse
            .apply_unchecked(&self.inverse.apply_transpose_unchecked(v))
    }
}

impl<F: Factor> Factor for EdgeBased<F> {
    fn input_dim(&self) -> usize {
        self.b.columns()
    }
    fn output_dim(&self) -> usize {
        self.b.n
    }
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        self.z(&self.b.apply_b(v))
    }
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        self.b.apply_bt(&self.z(v))
    }
}

// ---------------------------------------------------------------------------
// Top-level operator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Chain,
    ChainRefined,
    EdgeBased,
}

/// Any factor produced by [`build_factor`].
#[derive(Debug, Clone, PartialEq)]
pub enum FactorOperator {
    Chain(FactorChain),
    Refined(Refined<FactorChain>),
    EdgeBased(EdgeBased<Refined<FactorChain>>),
}

impl FactorOperator {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorOperator::Chain(_) => FactorKind::Chain,
            FactorOperator::Refined(_) => FactorKind::ChainRefined,
            FactorOperator::EdgeBased(_) => FactorKind::EdgeBased,
        }
    }

    pub fn chain(&self) -> &FactorChain {
        match self {
            FactorOperator::Chain(c) => c,
            FactorOperator::Refined(r) => &r.crude,
            FactorOperator::EdgeBased(e) => &e.inverse.crude,
        }
    }

    /// Exponent `p` targeted by `C̃ C̃ᵀ`.
    pub fn p(&self) -> f64 {
        self.chain().p
    }

    /// Stated accuracy: `C̃ C̃ᵀ ≈_g M^p` with `g` the returned value.
    pub fn guarantee(&self) -> f64 {
        match self {
            FactorOperator::Chain(c) => c.error_bound(),
            // the polynomial is certified to half the target
            FactorOperator::Refined(r) => 2.0 * r.poly.eps,
            FactorOperator::EdgeBased(e) => 4.0 * e.inverse.poly.eps,
        }
    }

    /// Wraps a refined inverse factor into its edge-based form.
    pub fn into_edge_based(self, m: &SparseSymMatrix) -> Result<FactorOperator> {
        match self {
            FactorOperator::Refined(r) => Ok(FactorOperator::EdgeBased(EdgeBased {
                inverse: r,
                b: edge_factor(m)?,
            })),
            FactorOperator::EdgeBased(e) => Ok(FactorOperator::EdgeBased(e)),
            FactorOperator::Chain(_) => Err(Error::InvalidParams(
                "edge-based factors need a refined inverse factor".into(),
            )),
        }
    }
}

impl Factor for FactorOperator {
    fn input_dim(&self) -> usize {
        match self {
            FactorOperator::Chain(c) => c.input_dim(),
            FactorOperator::Refined(r) => r.input_dim(),
            FactorOperator::EdgeBased(e) => e.input_dim(),
        }
    }
    fn output_dim(&self) -> usize {
        match self {
            FactorOperator::Chain(c) => c.output_dim(),
            FactorOperator::Refined(r) => r.output_dim(),
            FactorOperator::EdgeBased(e) => e.output_dim(),
        }
    }
    fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FactorOperator::Chain(c) => Factor::apply_unchecked(c, v),
            FactorOperator::Refined(r) => r.apply_unchecked(v),
            FactorOperator::EdgeBased(e) => e.apply_unchecked(v),
        }
    }
    fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FactorOperator::Chain(c) => Factor::apply_transpose_unchecked(c, v),
            FactorOperator::Refined(r) => r.apply_transpose_unchecked(v),
            FactorOperator::EdgeBased(e) => e.apply_transpose_unchecked(v),
        }
    }
}

/// Settings for [`build_factor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub p: f64,
    pub eps: f64,
    pub sparsify: SparsifyParams,
    /// `Σ ε_i` of the crude chain behind a refined inverse factor.
    pub crude_eps: f64,
    /// Refine `p = -1` factors; otherwise the plain chain is returned.
    pub refine: bool,
    /// Fixed refinement radius instead of the measured one.
    pub refine_delta: Option<f64>,
    /// The refinement polynomial targets `min(eps, refine_eps_cap)`. Its
    /// degree is logarithmic in the target, and a tight factor keeps the
    /// covariance bias of large sample batches below their noise.
    pub refine_eps_cap: f64,
    /// Share of `eps` given to the chain on the general-`p` path; the
    /// level polynomials take the same amount again.
    pub chain_share: f64,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            p: -1.0,
            eps: 0.1,
            sparsify: SparsifyParams::default(),
            crude_eps: 1.0,
            refine: true,
            refine_delta: None,
            refine_eps_cap: 1e-6,
            chain_share: 0.5,
        }
    }
}

/// Builds a factor with `C̃ C̃ᵀ ≈_eps M^p` for an SDDM matrix `M`.
///
/// `p = -1` builds a crude chain and refines it to `min(eps, refine_eps_cap)`;
/// other exponents build a
/// chain with `Σ ε_i = chain_share · eps`, whose guarantee is
/// `2 Σ ε_i`.
pub fn build_factor(m: &SparseSymMatrix, cfg: &FactorConfig) -> Result<FactorOperator> {
    let cert = validate_sddm(m);
    cert.require_sddm()?;
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
        return Err(Error::InvalidParams(format!("eps = {} must be positive", cfg.eps)));
    }
    let split = normalize(m, &cert)?;
    build_factor_on(m, &split, cfg)
}

/// [`build_factor`] with a precomputed splitting.
pub fn build_factor_on(m: &SparseSymMatrix, split: &Splitting, cfg: &FactorConfig) -> Result<FactorOperator> {
    if cfg.p == -1.0 && cfg.refine {
        let crude = build_chain(split, -1.0, cfg.crude_eps, &cfg.sparsify)?;
        let r = refine_inverse_factor(m, crude, cfg.eps.min(cfg.refine_eps_cap), cfg.refine_delta)?;
        return Ok(FactorOperator::Refined(r));
    }
    let chain = build_chain(split, cfg.p, cfg.chain_share * cfg.eps, &cfg.sparsify)?;
    Ok(FactorOperator::Chain(chain))
}

/// `x ≈ M⁻¹ b` as `F Fᵀ b` for an inverse factor `F`.
pub fn solve<F: Factor>(inverse: &F, b: &[f64]) -> Result<Vec<f64>> {
    let t = inverse.apply_transpose(b)?;
    inverse.apply(&t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::oracle::{dense_power, loewner_check};

    #[test]
    fn edge_factor_two_by_two() {
        let m = SparseSymMatrix::from_triplets(2, [(0, 0, 2.0), (0, 1, -1.0), (1, 1, 2.0)]).unwrap();
        let b = edge_factor(&m).unwrap();
        assert_eq!(b.edges, vec![(0, 1, 1.0)]);
        assert_eq!(b.slacks, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(b.gram().unwrap(), m);
        assert_eq!(b.max_column_nnz(), 2);
    }

    #[test]
    fn edge_factor_of_diagonal() {
        let m = SparseSymMatrix::diagonal(&[4.0, 9.0]);
        let b = edge_factor(&m).unwrap();
        assert!(b.edges.is_empty());
        assert_eq!(b.slacks, vec![(0, 2.0), (1, 3.0)]);
    }

    #[test]
    fn b_and_bt_are_adjoint() {
        let m = gen::grid2d(3, 0.5).unwrap();
        let b = edge_factor(&m).unwrap();
        let z: Vec<f64> = (0..b.columns()).map(|i| (i as f64).sin()).collect();
        let v: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let lhs: f64 = b.apply_b(&z).iter().zip(&v).map(|(a, c)| a * c).sum();
        let rhs: f64 = b.apply_bt(&v).iter().zip(&z).map(|(a, c)| a * c).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn refining_an_exact_factor_is_a_fixed_point() {
        let m = gen::grid2d(3, 0.5).unwrap();
        let exact = DenseFactor::power_of(&m.to_dense(), -1.0).unwrap();
        let r = refine_inverse_factor(&m, exact, 1e-6, None).unwrap();
        assert!(r.info.delta_measured < 1e-10);
        assert!(r.poly.t <= 2);
        let inv = dense_power(&m.to_dense(), -1.0).unwrap();
        assert!(r.gram().sub(&inv).max_abs() < 1e-10 * inv.max_abs());
    }

    #[test]
    fn refined_factor_meets_target() {
        let m = gen::grid2d(4, 0.2).unwrap();
        let f = build_factor(
            &m,
            &FactorConfig {
                eps: 1e-6,
                sparsify: SparsifyParams::exact(),
                ..Default::default()
            },
        )
        .unwrap();
        let inv = dense_power(&m.to_dense(), -1.0).unwrap();
        let r = loewner_check(&f.gram(), &inv, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn non_sddm_is_rejected() {
        let m = gen::sdd_mixed(6, 0.5, 1).unwrap();
        assert!(matches!(
            build_factor(&m, &FactorConfig::default()),
            Err(Error::NotSddm(_))
        ));
    }

    #[test]
    fn solve_diagonal() {
        let m = SparseSymMatrix::diagonal(&[2.0; 5]);
        let f = build_factor(&m, &FactorConfig { eps: 1e-8, ..Default::default() }).unwrap();
        let x = solve(&f, &[1.0; 5]).unwrap();
        assert!(x.iter().all(|v| (v - 0.5).abs() < 1e-8));
        assert_eq!(solve(&f, &[0.0; 5]).unwrap(), vec![0.0; 5]);
    }
}
