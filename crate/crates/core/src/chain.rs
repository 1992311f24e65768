//! Sparse factor chains `X_0, …, X_d` and the operator
//! `Z = T_0 T_1 ⋯ T_{d-1}` with `T_i = T_{-p/2, t_i}(I + ½X_i)`.
//!
//! Each level satisfies `I - X_{i+1} ≈_{ε_i} I - ½X_i - ½X_i²` and the last
//! satisfies `I ≈_{ε_d} I - X_d`, so that `Z Zᵀ ≈_{2Σε_j} (I - X_0)^p`.
//! The stored scale `c^{-p/2}` turns this into an approximation of `M^p`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::maclaurin::MaclaurinPoly;
use crate::oracle::{lanczos_radius, spectral_radius, DENSE_LIMIT};
use crate::rng::derive_seed;
use crate::sddm::Splitting;
use crate::sparse::SparseSymMatrix;
use crate::sparsify::{sparsify_square_step, SparsifyParams, SparsifyReport};

/// Krylov steps for `ρ(X_i)` above the dense limit.
pub const RHO_LANCZOS_STEPS: usize = 80;

/// Levels without eigenvalue progress tolerated before giving up.
pub const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorChain {
    pub p: f64,
    /// Normalization scale `c` with `c M = I - X_0`.
    pub c: f64,
    pub kappa_used: f64,
    /// Requested bound on `Σ ε_i`.
    pub eps_total: f64,
    /// Planned length `⌈log_{9/8}(κ / eps)⌉`.
    pub d_plan: usize,
    /// `X_0 … X_d`.
    pub levels: Vec<SparseSymMatrix>,
    /// `ε_0 … ε_d`.
    pub eps_schedule: Vec<f64>,
    /// `1 - ρ(X_i)` per level.
    pub lambdas: Vec<f64>,
    /// `T_{-p/2, t_i}` for `i < d`.
    pub polys: Vec<MaclaurinPoly>,
    /// Sparsifier report for each `X_{i+1}`.
    pub reports: Vec<SparsifyReport>,
}

/// `ρ(X)`: exact below the dense limit, Lanczos above it.
pub fn estimate_rho(x: &SparseSymMatrix, seed: u64) -> f64 {
    if x.n() <= DENSE_LIMIT {
        spectral_radius(x).value
    } else {
        lanczos_radius(x, RHO_LANCZOS_STEPS, seed)
    }
}

/// `⌈log_{9/8}(κ / eps)⌉`, at least 1.
pub fn planned_length(kappa: f64, eps: f64) -> usize {
    ((kappa / eps).ln() / (9.0f64 / 8.0).ln()).ceil().max(1.0) as usize
}

/// Spectral radius at which the chain stops: `I - X_d` is then within
/// `exp(±7/8 eps)` of `I`, and below the `5/6 eps` threshold.
pub fn stop_radius(eps: f64) -> f64 {
    (5.0 / 6.0 * eps).min(-(-7.0 / 8.0 * eps).exp_m1())
}

fn check_p(p: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("p = {p} outside [-1, 1]")));
    }
    Ok(())
}

/// Builds a chain with `Σ ε_i <= eps` on the splitting `c M = I - X_0`.
///
/// Every level gets `ε_i = eps / (8 d_plan)`; level polynomials are certified
/// to `ε_i / 2` on `[½, 3/2]` so that their squares are within `ε_i`.
pub fn build_chain(split: &Splitting, p: f64, eps: f64, sp: &SparsifyParams) -> Result<FactorChain> {
    check_p(p)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParams(format!("eps = {eps} must be positive")));
    }
    let x0 = split.x.clone();
    let mut rho = estimate_rho(&x0, derive_seed(sp.seed, 0x72686f));
    if p == 0.0 {
        return Ok(FactorChain {
            p,
            c: split.c,
            kappa_used: split.kappa_bound,
            eps_total: eps,
            d_plan: 0,
            levels: vec![x0],
            eps_schedule: vec![0.0],
            lambdas: vec![1.0 - rho],
            polys: Vec::new(),
            reports: Vec::new(),
        });
    }
    let d_plan = planned_length(split.kappa_bound, eps);
    let eps_level = eps / (8.0 * d_plan as f64);
    let stop = stop_radius(eps);
    let mut levels = vec![x0];
    let mut lambdas = vec![1.0 - rho];
    let mut reports = Vec::new();
    let mut stalls = 0;
    while rho > stop && levels.len() <= d_plan {
        let i = levels.len() - 1;
        if rho >= 1.0 {
            return Err(Error::ChainDiverged(format!(
                "level {i} has spectral radius {rho:.6} >= 1"
            )));
        }
        let params = SparsifyParams {
            eps: eps_level,
            seed: derive_seed(sp.seed, i as u64),
            ..sp.clone()
        };
        let (next, report) = sparsify_square_step(&levels[i], &params)?;
        let next_rho = estimate_rho(&next, derive_seed(sp.seed, 0x72686f + i as u64 + 1));
        if 1.0 - next_rho <= lambdas[i] {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                return Err(Error::ChainDiverged(format!(
                    "no eigenvalue progress for {STALL_LIMIT} levels (at level {}, lambda = {:.6})",
                    i + 1,
                    1.0 - next_rho
                )));
            }
        } else {
            stalls = 0;
        }
        levels.push(next);
        lambdas.push(1.0 - next_rho);
        reports.push(report);
        rho = next_rho;
    }
    let d = levels.len() - 1;
    if rho >= 1.0 {
        return Err(Error::ChainDiverged(format!(
            "final level has spectral radius {rho:.6} >= 1"
        )));
    }
    let mut eps_schedule = vec![eps_level; d];
    eps_schedule.push(-(-rho).ln_1p());
    let polys = (0..d)
        .map(|_| MaclaurinPoly::new(-p / 2.0, 0.5, eps_level / 2.0))
        .collect();
    Ok(FactorChain {
        p,
        c: split.c,
        kappa_used: split.kappa_bound,
        eps_total: eps,
        d_plan,
        levels,
        eps_schedule,
        lambdas,
        polys,
        reports,
    })
}

impl FactorChain {
    pub fn n(&self) -> usize {
        self.levels[0].n()
    }

    /// Chain length `d`.
    pub fn d(&self) -> usize {
        self.levels.len() - 1
    }

    /// `Σ ε_j` over the schedule.
    pub fn eps_sum(&self) -> f64 {
        self.eps_schedule.iter().sum()
    }

    /// Guaranteed bound `2 Σ ε_j` on `Z Zᵀ` against `M^p`.
    pub fn error_bound(&self) -> f64 {
        2.0 * self.eps_sum()
    }

    /// Factor applied after the chain so that `Z Zᵀ` targets `M^p`.
    pub fn scale(&self) -> f64 {
        self.c.powf(-self.p / 2.0)
    }

    pub fn nnz_per_level(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.nnz()).collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.polys.iter().map(|q| q.t).collect()
    }

    fn level_poly(&self, i: usize, w: &[f64]) -> Vec<f64> {
        self.polys[i]
            .apply_operator_poly(&self.levels[i], (1.0, 0.5), w)
            .expect("level dimensions agree")
    }

    /// `Z v` without a length check.
    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for i in (0..self.d()).rev() {
            w = self.level_poly(i, &w);
        }
        let s = self.scale();
        w.iter_mut().for_each(|x| *x *= s);
        w
    }

    /// `Zᵀ v` without a length check.
    pub(crate) fn apply_transpose_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for i in 0..self.d() {
            w = self.level_poly(i, &w);
        }
        let s = self.scale();
        w.iter_mut().for_each(|x| *x *= s);
        w
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), v.len())?;
        Ok(self.apply_unchecked(v))
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), v.len())?;
        Ok(self.apply_transpose_unchecked(v))
    }
}

/// Per-level summary used in run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub nnz: usize,
    pub lambda: f64,
    pub eps: f64,
    pub degree: Option<usize>,
    pub eps_measured: Option<f64>,
}

impl FactorChain {
    pub fn summary(&self) -> Vec<LevelSummary> {
        (0..=self.d())
            .map(|i| LevelSummary {
                level: i,
                nnz: self.levels[i].nnz(),
                lambda: self.lambdas[i],
                eps: self.eps_schedule[i],
                degree: self.polys.get(i).map(|q| q.t),
                eps_measured: if i == 0 {
                    None
                } else {
                    self.reports[i - 1].eps_measured
                },
            })
            .collect()
    }
}
