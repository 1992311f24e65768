//! Sparse nonnegative `X̃` with `I - X̃ ≈ I - ½X - ½X²`.
//!
//! Stage one replaces `X²` by an unbiased two-step random-walk estimate.
//! Stage two keeps each off-diagonal entry of `½(X + X')` with probability
//! proportional to its leverage score in `I - ½(X + X')` and reweights the
//! survivors. Both stages then reset the diagonal so that every row sum
//! equals the row sum of the exact target, which keeps the identity part
//! and the diagonal slack of the target exact.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::conjugate_gradient;
use crate::oracle::{cholesky, loewner_check, DenseSym};
use crate::rng::{derive_seed, stream_rng};
use crate::sparse::SparseSymMatrix;

/// `n` below which the `ln n` in the keep probability is held constant;
/// tiny graphs otherwise keep too few edges for the target accuracy.
pub const LEVERAGE_LOG_FLOOR: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsifyMode {
    /// No sampling: `X̃ = ½X + ½X²`.
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyParams {
    /// Target approximation for one full step, split across the stages.
    pub eps: f64,
    pub seed: u64,
    /// Walks per incident entry; `None` uses `⌈9 ln n / ε_walk²⌉`.
    pub samples_per_edge: Option<usize>,
    pub mode: SparsifyMode,
    /// Largest `n` whose leverage scores are computed from a dense
    /// factorization; above it a random projection with CG solves is used.
    pub exact_threshold: usize,
    /// Share of `eps` given to the walk stage; the rest goes to the
    /// leverage stage.
    pub walk_share: f64,
    /// Keep probability is `min(1, oversampling · τ_e · ln max(n, 64) / ε²)`.
    pub oversampling: f64,
    /// Rows of the random projection: `⌈jl_factor · ln n⌉`.
    pub jl_factor: f64,
    pub cg_tol: f64,
    /// Largest `n` for which the achieved `eps` is measured densely.
    pub measure_max_n: usize,
}

impl Default for SparsifyParams {
    fn default() -> Self {
        SparsifyParams {
            eps: 0.5,
            seed: 0,
            samples_per_edge: None,
            mode: SparsifyMode::Sampled,
            exact_threshold: 4096,
            walk_share: 0.5,
            oversampling: 0.15,
            jl_factor: 48.0,
            cg_tol: 1e-8,
            measure_max_n: 200,
        }
    }
}

impl SparsifyParams {
    pub fn exact() -> Self {
        SparsifyParams {
            mode: SparsifyMode::Exact,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParams(format!("eps = {} must be positive", self.eps)));
        }
        if self.samples_per_edge == Some(0) {
            return Err(Error::InvalidParams("samples_per_edge must be at least 1".into()));
        }
        if !(self.walk_share > 0.0 && self.walk_share < 1.0) {
            return Err(Error::InvalidParams(format!(
                "walk_share = {} must lie in (0, 1)",
                self.walk_share
            )));
        }
        if !(self.oversampling > 0.0) || !(self.jl_factor > 0.0) || !(self.cg_tol > 0.0) {
            return Err(Error::InvalidParams(
                "oversampling, jl_factor and cg_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn walk_eps(&self) -> f64 {
        self.eps * self.walk_share
    }

    pub fn leverage_eps(&self) -> f64 {
        self.eps * (1.0 - self.walk_share)
    }

    /// Walks per incident entry for an `n`-vertex matrix.
    pub fn walks(&self, n: usize) -> usize {
        self.samples_per_edge.unwrap_or_else(|| {
            let e = self.walk_eps();
            (9.0 * (n.max(2) as f64).ln() / (e * e)).ceil() as usize
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub walks_per_edge: usize,
    pub exact_midpoints: usize,
    pub sampled_midpoints: usize,
    /// Rows whose diagonal would have gone negative and was set to zero.
    pub clamped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeverageMethod {
    None,
    Dense,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageStats {
    pub method: LeverageMethod,
    pub edges_in: usize,
    pub edges_kept: usize,
    pub leverage_sum: f64,
    pub clamped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyReport {
    pub nnz_in: usize,
    pub nnz_out: usize,
    pub eps_requested: f64,
    /// Achieved `max |ln λ|` against the exact target; zero when nothing
    /// was sampled, absent when `n` is too large to measure.
    pub eps_measured: Option<f64>,
    pub mode: SparsifyMode,
    pub walk: WalkStats,
    pub leverage: LeverageStats,
}

/// `I - X` must be positive definite with unit-bounded nonnegative `X`.
fn check_input(x: &SparseSymMatrix) -> Result<()> {
    if x.nnz() > 0 && x.min_value() < 0.0 {
        return Err(Error::InvalidParams("X must be entrywise nonnegative".into()));
    }
    Ok(())
}

/// Exact `X²` row sums, `(X s)_u` with `s = X 1`.
fn square_row_sums(x: &SparseSymMatrix) -> Vec<f64> {
    let s = x.row_sums();
    let mut out = vec![0.0; x.n()];
    x.matvec_raw(&s, &mut out);
    out
}

/// Assembles symmetric off-diagonal contributions and sets the diagonal so
/// that row `u` sums to `row_target[u]`. Returns the matrix and the number
/// of clamped rows.
fn with_row_sums(
    n: usize,
    offdiag: impl IntoIterator<Item = (usize, usize, f64)>,
    row_target: &[f64],
) -> Result<(SparseSymMatrix, usize)> {
    let off = SparseSymMatrix::from_summed_triplets(n, offdiag)?;
    let sums = off.row_sums();
    let mut clamped = 0;
    let diag: Vec<(usize, usize, f64)> = (0..n)
        .map(|u| {
            let d = row_target[u] - sums[u];
            if d < 0.0 {
                clamped += 1;
                (u, u, 0.0)
            } else {
                (u, u, d)
            }
        })
        .collect();
    let m = SparseSymMatrix::from_summed_triplets(n, off.entries().chain(diag))?;
    Ok((m, clamped))
}

/// Two-step walk estimate `X'` of `X²`.
///
/// For a midpoint `w` with row sum `s_w`, each incident entry `(u, w)` sends
/// `k` walks to endpoints `v` drawn with probability `X_wv / s_w`, each
/// adding `X_uw s_w / k` to `(u, v)`. Midpoints with `deg(w) <= k` are
/// expanded exactly. Each midpoint draws from its own random stream.
pub fn square_walk_sparsify(
    x: &SparseSymMatrix,
    params: &SparsifyParams,
) -> Result<(SparseSymMatrix, WalkStats)> {
    check_input(x)?;
    params.validate()?;
    let n = x.n();
    let k = params.walks(n);
    if params.mode == SparsifyMode::Exact || x.num_edges() <= 1 {
        return Ok((
            x.square(),
            WalkStats {
                walks_per_edge: k,
                exact_midpoints: n,
                ..Default::default()
            },
        ));
    }
    let adj = x.neighbors();
    let seed = derive_seed(params.seed, 0x7761_6c6b);
    let per_mid: Vec<(Vec<(usize, usize, f64)>, bool)> = (0..n)
        .into_par_iter()
        .map(|w| {
            let nb = &adj[w];
            let mut out = Vec::new();
            if nb.is_empty() {
                return (out, true);
            }
            if nb.len() <= k {
                for &(u, a_uw) in nb {
                    for &(v, a_wv) in nb {
                        if u == v {
                            out.push((u, u, a_uw * a_wv));
                        } else {
                            out.push((u, v, 0.5 * a_uw * a_wv));
                        }
                    }
                }
                return (out, true);
            }
            let s_w: f64 = nb.iter().map(|&(_, a)| a).sum();
            let dist = WeightedIndex::new(nb.iter().map(|&(_, a)| a)).expect("positive row");
            let mut rng = stream_rng(seed, w as u64);
            for &(u, a_uw) in nb {
                let weight = a_uw * s_w / k as f64;
                for _ in 0..k {
                    let v = nb[dist.sample(&mut rng)].0;
                    if u == v {
                        out.push((u, u, weight));
                    } else {
                        out.push((u, v, 0.5 * weight));
                    }
                }
            }
            (out, false)
        })
        .collect();
    let exact_midpoints = per_mid.iter().filter(|(_, e)| *e).count();
    let target = square_row_sums(x);
    let (xp, clamped) = with_row_sums(
        n,
        per_mid
            .into_iter()
            .flat_map(|(t, _)| t)
            .filter(|&(u, v, _)| u != v),
        &target,
    )?;
    Ok((
        xp,
        WalkStats {
            walks_per_edge: k,
            exact_midpoints,
            sampled_midpoints: n - exact_midpoints,
            clamped_rows: clamped,
        },
    ))
}

/// Off-diagonal edges `(u, v, w)` of a nonnegative matrix, `u < v`.
fn edges(a: &SparseSymMatrix) -> Vec<(usize, usize, f64)> {
    a.entries().filter(|&(i, j, _)| i != j).collect()
}

/// Effective resistances `χ_eᵀ K⁻¹ χ_e` of all edges from a dense Cholesky
/// factor `K = L Lᵀ`, using columns of `L⁻¹`.
fn dense_resistances(k: &SparseSymMatrix, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    let n = k.n();
    let l = cholesky(&k.to_dense())?;
    // column j of L⁻¹, stored as row j of `w`
    let w: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut y = vec![0.0; n];
            y[j] = 1.0 / l[j * n + j];
            for i in j + 1..n {
                let row = &l[i * n..i * n + i];
                let s: f64 = (j..i).map(|c| row[c] * y[c]).sum();
                y[i] = -s / l[i * n + i];
            }
            y
        })
        .collect();
    Ok(edges
        .par_iter()
        .map(|&(u, v, _)| {
            w[u].iter()
                .zip(&w[v])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect())
}

/// Approximate effective resistances by sketching `C K⁻¹` with a random
/// sign matrix, where `K = Cᵀ C` stacks weighted edge rows and slack rows.
fn projected_resistances(
    k: &SparseSymMatrix,
    edges: &[(usize, usize, f64)],
    slack: &[f64],
    params: &SparsifyParams,
) -> Result<Vec<f64>> {
    let n = k.n();
    let rows = (params.jl_factor * (n.max(2) as f64).ln()).ceil() as usize;
    let diag = k.diag();
    let seed = derive_seed(params.seed, 0x6a6c);
    let scale = 1.0 / (rows as f64).sqrt();
    let sketches: Vec<Result<Vec<f64>>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            // b = Cᵀ q for a random sign vector q
            let mut b = vec![0.0; n];
            for &(u, v, w) in edges {
                let q = if rng.random::<bool>() { scale } else { -scale };
                let c = q * w.sqrt();
                b[u] += c;
                b[v] -= c;
            }
            for (i, &s) in slack.iter().enumerate() {
                let q = if rng.random::<bool>() { scale } else { -scale };
                b[i] += q * s.max(0.0).sqrt();
            }
            let sol = conjugate_gradient(k, &diag, &b, params.cg_tol, 20 * n + 100);
            if sol.relative_residual > params.cg_tol.max(1e-6) {
                return Err(Error::NoConvergence {
                    what: "CG solve for leverage sketch",
                    best: sol.relative_residual,
                });
            }
            Ok(sol.x)
        })
        .collect();
    let z: Vec<Vec<f64>> = sketches.into_iter().collect::<Result<_>>()?;
    Ok(edges
        .par_iter()
        .map(|&(u, v, _)| z.iter().map(|zr| (zr[u] - zr[v]).powi(2)).sum())
        .collect())
}

/// Sparsifies `½(I - X) + ½(I - X')` by leverage-score sampling of its
/// off-diagonal part; the diagonal slack is carried exactly.
pub fn average_and_sparsify(
    x: &SparseSymMatrix,
    xp: &SparseSymMatrix,
    params: &SparsifyParams,
) -> Result<(SparseSymMatrix, LeverageStats)> {
    check_input(x)?;
    check_input(xp)?;
    params.validate()?;
    let n = x.n();
    let avg = x.linear_combination(0.5, xp, 0.5)?;
    let e = edges(&avg);
    let none = |avg: SparseSymMatrix, e: &[(usize, usize, f64)]| {
        let m = e.len();
        (
            avg,
            LeverageStats {
                method: LeverageMethod::None,
                edges_in: m,
                edges_kept: m,
                leverage_sum: f64::NAN,
                clamped_rows: 0,
            },
        )
    };
    if params.mode == SparsifyMode::Exact || e.len() <= 1 {
        return Ok(none(avg, &e));
    }
    let rows = avg.row_sums();
    let slack: Vec<f64> = rows.iter().map(|r| 1.0 - r).collect();
    if let Some((i, s)) = slack.iter().cloned().enumerate().find(|&(_, s)| s <= 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "row {i} of I - ½(X + X') has slack {s:.3e}"
        )));
    }
    let k = avg.identity_minus();
    let (res, method) = if n <= params.exact_threshold {
        (dense_resistances(&k, &e)?, LeverageMethod::Dense)
    } else {
        (
            projected_resistances(&k, &e, &slack, params)?,
            LeverageMethod::Projection,
        )
    };
    let eps = params.leverage_eps();
    let factor = params.oversampling * (n.max(LEVERAGE_LOG_FLOOR) as f64).ln() / (eps * eps);
    // Floor keeping each row's reweighted excess within its own diagonal
    // share, so the reset diagonal can never go negative.
    let diag = avg.diag();
    let mut deg = vec![0usize; n];
    for &(u, v, _) in &e {
        deg[u] += 1;
        deg[v] += 1;
    }
    let budget: Vec<f64> = (0..n).map(|u| diag[u] / deg[u].max(1) as f64).collect();
    let probs: Vec<f64> = e
        .iter()
        .zip(&res)
        .map(|(&(u, v, w), &r)| {
            let floor = w / (w + budget[u].min(budget[v]));
            (factor * w * r).max(floor).min(1.0)
        })
        .collect();
    let leverage_sum: f64 = e.iter().zip(&res).map(|(&(_, _, w), &r)| w * r).sum();
    if probs.iter().all(|&p| p >= 1.0) {
        let (avg, mut stats) = none(avg, &e);
        stats.method = method;
        stats.leverage_sum = leverage_sum;
        return Ok((avg, stats));
    }
    let mut rng = stream_rng(derive_seed(params.seed, 0x6c65_7672), 0);
    let mut kept = Vec::new();
    for (&(u, v, w), &p) in e.iter().zip(&probs) {
        if p >= 1.0 || rng.random::<f64>() < p {
            kept.push((u, v, w / p));
        }
    }
    let edges_kept = kept.len();
    let (out, clamped) = with_row_sums(n, kept, &rows)?;
    Ok((
        out,
        LeverageStats {
            method,
            edges_in: e.len(),
            edges_kept,
            leverage_sum,
            clamped_rows: clamped,
        },
    ))
}

/// `½X + ½X²` without sampling.
pub fn exact_square_step(x: &SparseSymMatrix) -> Result<SparseSymMatrix> {
    x.linear_combination(0.5, &x.square(), 0.5)
}

/// Measures `max |ln λ|` for the pencil `(I - X̃, I - ½X - ½X²)`.
pub fn measure_step(x: &SparseSymMatrix, xt: &SparseSymMatrix) -> Result<f64> {
    let target = exact_square_step(x)?.identity_minus().to_dense();
    let got = xt.identity_minus().to_dense();
    Ok(loewner_check(&got, &target, f64::INFINITY)?.eps_measured)
}

/// Both stages composed. The achieved accuracy is measured densely when
/// `n <= params.measure_max_n` and something was actually sampled.
pub fn sparsify_square_step(
    x: &SparseSymMatrix,
    params: &SparsifyParams,
) -> Result<(SparseSymMatrix, SparsifyReport)> {
    let (xp, walk) = square_walk_sparsify(x, params)?;
    let (xt, leverage) = average_and_sparsify(x, &xp, params)?;
    let sampled = walk.sampled_midpoints > 0 || leverage.edges_kept < leverage.edges_in;
    let eps_measured = if !sampled {
        Some(0.0)
    } else if x.n() <= params.measure_max_n {
        Some(measure_step(x, &xt)?)
    } else {
        None
    };
    let report = SparsifyReport {
        nnz_in: x.nnz(),
        nnz_out: xt.nnz(),
        eps_requested: params.eps,
        eps_measured,
        mode: params.mode,
        walk,
        leverage,
    };
    Ok((xt, report))
}

/// Dense effective resistance of a single pair, for tests.
#[doc(hidden)]
pub fn dense_pair_resistance(k: &DenseSym, u: usize, v: usize) -> Result<f64> {
    let inv = k.inverse()?;
    Ok(inv.get(u, u) + inv.get(v, v) - 2.0 * inv.get(u, v))
}
