//! Dense reference computations used to certify spectral claims at desk
//! scale: eigendecompositions, matrix powers, Loewner-order checks and the
//! randomized property suite for approximation facts.
//!
//! Everything here is O(n^3) and meant for n in the hundreds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{lanczos_bounds, power_iteration};
use crate::sparse::SparseSymMatrix;

/// Dense size limit for oracle routines.
pub const DENSE_LIMIT: usize = 512;

/// Dense symmetric matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    n: usize,
    values: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(n: usize) -> Self {
        DenseSym {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.values[i * d.len() + i] = v;
        }
        m
    }

    /// Accepts a row-major square matrix whose asymmetry is at most `1e-12`
    /// relative to its largest entry, then symmetrizes it exactly.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: values.len(),
            });
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::NonSymmetric {
                        row: i,
                        col: j,
                        a,
                        b,
                    });
                }
            }
        }
        Ok(Self::symmetrized(n, values))
    }

    fn symmetrized(n: usize, mut values: Vec<f64>) -> Self {
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (values[i * n + j] + values[j * n + i]);
                values[i * n + j] = avg;
                values[j * n + i] = avg;
            }
        }
        DenseSym { n, values }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = f(i, j);
            }
        }
        Self::symmetrized(n, values)
    }

    /// `F Fᵀ` for a row-major `rows x cols` matrix `F`.
    pub fn gram(f: &[f64], rows: usize, cols: usize) -> Self {
        assert_eq!(f.len(), rows * cols);
        let mut values = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in i..rows {
                let s: f64 = (0..cols).map(|k| f[i * cols + k] * f[j * cols + k]).sum();
                values[i * rows + j] = s;
                values[j * rows + i] = s;
            }
        }
        DenseSym { n: rows, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    /// General product `self * other`, row-major (not symmetric in general).
    pub fn matmul(&self, other: &DenseSym) -> Vec<f64> {
        mat_mul(&self.values, &other.values, self.n, self.n, self.n)
    }

    /// `self * other * self`, which is symmetric.
    pub fn sandwich(&self, other: &DenseSym) -> DenseSym {
        let t = mat_mul(&self.values, &other.values, self.n, self.n, self.n);
        DenseSym::symmetrized(self.n, mat_mul(&t, &self.values, self.n, self.n, self.n))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.values[i * self.n + j] * x[j]).sum())
            .collect()
    }

    pub fn add(&self, other: &DenseSym) -> DenseSym {
        DenseSym {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DenseSym) -> DenseSym {
        DenseSym {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> DenseSym {
        DenseSym {
            n: self.n,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `Vᵀ self V` for a row-major `n x k` matrix `V`.
    pub fn congruence(&self, v: &[f64], k: usize) -> DenseSym {
        let n = self.n;
        let av = mat_mul(&self.values, v, n, n, k);
        let vt = transpose(v, n, k);
        DenseSym::symmetrized(k, mat_mul(&vt, &av, k, n, k))
    }

    pub fn eigen(&self) -> Eigen {
        jacobi_eigen(self)
    }

    pub fn inverse(&self) -> Result<DenseSym> {
        dense_power(self, -1.0)
    }
}

/// Row-major `(r x k) * (k x c)`.
pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            let row = &b[l * c..(l + 1) * c];
            let o = &mut out[i * c..(i + 1) * c];
            for (oj, bj) in o.iter_mut().zip(row) {
                *oj += a_il * bj;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut t = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            t[j * r + i] = a[i * c + j];
        }
    }
    t
}

/// Eigendecomposition `A = V diag(values) Vᵀ`; `vectors` is row-major with
/// eigenvectors in columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl Eigen {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseSym {
        let n = self.values.len();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n)
                    .map(|k| self.vectors[i * n + k] * fl[k] * self.vectors[j * n + k])
                    .sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        DenseSym { n, values: out }
    }
}

/// Cyclic Jacobi eigensolver.
pub fn jacobi_eigen(a: &DenseSym) -> Eigen {
    let n = a.n;
    let mut m = a.values.clone();
    let mut v = DenseSym::identity(n).values;
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= 1e-32 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Eigen {
        values: (0..n).map(|i| m[i * n + i]).collect(),
        vectors: v,
    }
}

/// Eigenvalues of a row-major symmetric matrix by Householder
/// tridiagonalization followed by implicit QL. Faster than Jacobi when the
/// vectors are not needed.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut a = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let idx = |i: usize, j: usize| i * n + j;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[idx(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = a[idx(i, l)];
            } else {
                for k in 0..=l {
                    a[idx(i, k)] /= scale;
                    h += a[idx(i, k)] * a[idx(i, k)];
                }
                let f = a[idx(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[idx(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[idx(j, k)] * a[idx(i, k)];
                    }
                    for k in j + 1..=l {
                        g += a[idx(k, j)] * a[idx(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * a[idx(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[idx(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[idx(j, k)] -= f * e[k] + g * a[idx(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[idx(i, l)];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[idx(i, i)];
    }
    tridiagonal_ql(&mut d, &mut e);
    d
}

/// Implicit QL on a symmetric tridiagonal matrix with diagonal `d` and
/// subdiagonal `e[1..]`. Eigenvalues are left in `d`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Lower Cholesky factor, row-major.
pub fn cholesky(a: &DenseSym) -> Result<Vec<f64>> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut s = a.get(j, j);
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        if s <= 1e-14 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "Cholesky pivot {j} is {s:.3e}"
            )));
        }
        let d = s.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Generalized eigenvalues of the pencil `(a, b)` with `b` positive definite,
/// i.e. the spectrum of `L⁻¹ a L⁻ᵀ` where `b = L Lᵀ`.
pub fn generalized_eigenvalues(a: &DenseSym, b: &DenseSym) -> Result<Vec<f64>> {
    let n = a.n;
    if b.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.n,
        });
    }
    let l = cholesky(b)?;
    // Y = L⁻¹ A, column by column
    let mut y = a.values.clone();
    for col in 0..n {
        for i in 0..n {
            let mut s = y[i * n + col];
            for k in 0..i {
                s -= l[i * n + k] * y[k * n + col];
            }
            y[i * n + col] = s / l[i * n + i];
        }
    }
    // C = Y L⁻ᵀ, i.e. solve L Cᵀ = Yᵀ row by row
    let mut c = vec![0.0; n * n];
    for row in 0..n {
        for i in 0..n {
            let mut s = y[row * n + i];
            for k in 0..i {
                s -= l[i * n + k] * c[row * n + k];
            }
            c[row * n + i] = s / l[i * n + i];
        }
    }
    let c = DenseSym::symmetrized(n, c);
    let mut ev = jacobi_eigen(&c).values;
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ev)
}

/// `Mᵖ` via the eigendecomposition.
pub fn dense_power(m: &DenseSym, p: f64) -> Result<DenseSym> {
    if p == 0.0 {
        return Ok(DenseSym::identity(m.n));
    }
    if p == 1.0 {
        return Ok(m.clone());
    }
    let eig = jacobi_eigen(m);
    let lmin = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if p < 0.0 && lmin <= 1e-12 {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {lmin:.3e} for power {p}"
        )));
    }
    if lmin < -1e-12 * scale.max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {lmin:.3e} for power {p}"
        )));
    }
    Ok(eig.map(|l| l.max(0.0).powf(p)))
}

/// Outcome of comparing two positive definite matrices in Loewner order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoewnerReport {
    pub pass: bool,
    /// `max |ln λ|` over the generalized eigenvalues of `(a, b)`.
    pub eps_measured: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Checks `exp(eps) b ≽ a ≽ exp(-eps) b`.
pub fn loewner_check(a: &DenseSym, b: &DenseSym, eps: f64) -> Result<LoewnerReport> {
    let ev = generalized_eigenvalues(a, b)?;
    let lambda_min = ev[0];
    let lambda_max = ev[ev.len() - 1];
    if lambda_min <= 0.0 {
        return Ok(LoewnerReport {
            pass: false,
            eps_measured: f64::INFINITY,
            lambda_min,
            lambda_max,
        });
    }
    let eps_measured = lambda_min.ln().abs().max(lambda_max.ln().abs());
    Ok(LoewnerReport {
        pass: eps_measured <= eps,
        eps_measured,
        lambda_min,
        lambda_max,
    })
}

/// Spectral radius estimate and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub converged: bool,
    pub dense: bool,
}

/// `ρ(X)`: dense eigensolve up to `dense_limit`, power iteration beyond.
pub fn spectral_radius_with(x: &SparseSymMatrix, dense_limit: usize) -> RadiusEstimate {
    let n = x.n();
    if n == 0 || x.nnz() == 0 {
        return RadiusEstimate {
            value: 0.0,
            converged: true,
            dense: true,
        };
    }
    if n <= dense_limit {
        let d = x.to_dense();
        let ev = symmetric_eigenvalues(d.as_slice(), n);
        return RadiusEstimate {
            value: ev.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            converged: true,
            dense: true,
        };
    }
    let est = power_iteration(x, 20_000, 1e-8, 0x5eed);
    RadiusEstimate {
        value: est.value,
        converged: est.converged,
        dense: false,
    }
}

pub fn spectral_radius(x: &SparseSymMatrix) -> RadiusEstimate {
    spectral_radius_with(x, DENSE_LIMIT)
}

/// Lanczos-based radius, the cheap estimate used during chain building.
pub fn lanczos_radius(x: &SparseSymMatrix, steps: usize, seed: u64) -> f64 {
    lanczos_bounds(x, steps, seed).radius()
}

// ---------------------------------------------------------------------------
// Randomized property suite

#[derive(Debug, Clone, Copy)]
pub struct FactSuiteOptions {
    /// Multiplier on the transitivity bound `ε₁ + ε₂`. Anything below 1
    /// is a deliberately broken bound used to check that the suite can fail.
    pub transitivity_scale: f64,
    pub max_n: usize,
}

impl Default for FactSuiteOptions {
    fn default() -> Self {
        FactSuiteOptions {
            transitivity_scale: 1.0,
            max_n: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactCheck {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Largest observed `eps_measured - bound`.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactSuiteReport {
    pub checks: Vec<FactCheck>,
}

impl FactSuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }

    pub fn get(&self, name: &str) -> Option<&FactCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const FACT_TOL: f64 = 1e-9;

fn random_normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Vec<f64> {
    (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DenseSym {
    let g = random_normal_matrix(rng, n, n);
    let mut a = DenseSym::gram(&g, n, n);
    for i in 0..n {
        a.values[i * n + i] += 0.1 * n as f64;
    }
    a
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let g = random_normal_matrix(rng, n, n);
    let s = DenseSym::from_fn(n, |i, j| g[i * n + j] + g[j * n + i]);
    jacobi_eigen(&s).vectors
}

/// Returns `b` with `a ≈_eps b` tight: the generalized eigenvalues of
/// `(b, a)` span `[exp(-eps), exp(eps)]` with one endpoint attained at
/// `exp(sign * eps)`.
fn perturb(rng: &mut ChaCha8Rng, a: &DenseSym, eps: f64, sign: f64) -> DenseSym {
    let n = a.n;
    let q = random_orthogonal(rng, n);
    let mut logs: Vec<f64> = (0..n).map(|_| rng.random_range(-eps..=eps)).collect();
    logs[0] = sign * eps;
    let e = Eigen {
        values: logs.iter().map(|s| s.exp()).collect(),
        vectors: q,
    }
    .map(|l| l);
    let half = dense_power(a, 0.5).expect("PD");
    half.sandwich(&e)
}

fn measured(a: &DenseSym, b: &DenseSym) -> f64 {
    loewner_check(a, b, f64::INFINITY)
        .map(|r| r.eps_measured)
        .unwrap_or(f64::INFINITY)
}

/// Randomized checks of the standard Loewner-approximation facts
/// (additivity, sums, transitivity, inversion, congruence) and of power
/// transfer `A ≈_ε B ⇒ Aᵖ ≈_{|p|ε} Bᵖ` for `p ∈ {±1, ±½}`.
pub fn fact_suite(trials: usize, seed: u64) -> FactSuiteReport {
    fact_suite_with(trials, seed, FactSuiteOptions::default())
}

pub fn fact_suite_with(trials: usize, seed: u64, opts: FactSuiteOptions) -> FactSuiteReport {
    let names = [
        "a_additive",
        "b_sum",
        "c_transitive",
        "d_inverse",
        "e_congruence",
        "power_p=1",
        "power_p=-1",
        "power_p=0.5",
        "power_p=-0.5",
    ];
    let mut checks: Vec<FactCheck> = names
        .iter()
        .map(|n| FactCheck {
            name: n.to_string(),
            trials: 0,
            failures: 0,
            worst_excess: f64::NEG_INFINITY,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut record = |k: usize, value: f64, bound: f64| {
        let c = &mut checks[k];
        c.trials += 1;
        let excess = value - bound;
        c.worst_excess = c.worst_excess.max(excess);
        if excess > FACT_TOL {
            c.failures += 1;
        }
    };
    for _ in 0..trials {
        let n = rng.random_range(2..=opts.max_n.max(2));
        let eps = rng.random_range(0.01..1.0);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = random_pd(&mut rng, n);
        let y = perturb(&mut rng, &x, eps, sign);

        // (a) W + Y ≈ W + Z
        let w = random_pd(&mut rng, n);
        record(0, measured(&w.add(&x), &w.add(&y)), eps);

        // (b) X + W ≈ Y + Z
        let z = perturb(&mut rng, &w, eps, -sign);
        record(1, measured(&x.add(&w), &y.add(&z)), eps);

        // (c) transitivity; half the trials align both errors so the
        // bound is attained.
        let eps2 = rng.random_range(0.01..1.0);
        let z2 = if rng.random::<bool>() {
            y.scaled((sign * eps2).exp())
        } else {
            perturb(&mut rng, &y, eps2, sign)
        };
        record(
            2,
            measured(&x, &z2),
            opts.transitivity_scale * (eps + eps2),
        );

        // (d) inversion
        let xi = dense_power(&x, -1.0).expect("PD");
        let yi = dense_power(&y, -1.0).expect("PD");
        record(3, measured(&xi, &yi), eps);

        // (e) congruence with a random full-column-rank V
        let k = rng.random_range(1..=n);
        let v = random_normal_matrix(&mut rng, n, k);
        record(4, measured(&x.congruence(&v, k), &y.congruence(&v, k)), eps);

        for (slot, p) in [(5usize, 1.0f64), (6, -1.0), (7, 0.5), (8, -0.5)] {
            let xp = dense_power(&x, p).expect("PD");
            let yp = dense_power(&y, p).expect("PD");
            record(slot, measured(&xp, &yp), p.abs() * eps);
        }
    }
    FactSuiteReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sym(n: usize, seed: u64) -> DenseSym {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_normal_matrix(&mut rng, n, n);
        DenseSym::from_fn(n, |i, j| g[i * n + j] + g[j * n + i])
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = random_sym(12, 1);
        let back = a.eigen().map(|l| l);
        assert!(back.sub(&a).max_abs() < 1e-12);
    }

    #[test]
    fn eigensolvers_agree() {
        let a = random_sym(30, 2);
        let mut j = jacobi_eigen(&a).values;
        let mut q = symmetric_eigenvalues(a.as_slice(), 30);
        j.sort_by(|x, y| x.partial_cmp(y).unwrap());
        q.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in j.iter().zip(&q) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn power_of_identity_and_diagonal() {
        let i = DenseSym::identity(3);
        for p in [-1.0, -0.5, 0.5, 1.0] {
            assert!(dense_power(&i, p).unwrap().sub(&i).max_abs() < 1e-15);
        }
        let d = DenseSym::diagonal(&[4.0, 9.0]);
        let r = dense_power(&d, 0.5).unwrap();
        assert!((r.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((r.get(1, 1) - 3.0).abs() < 1e-14);
        assert!(r.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn square_root_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_pd(&mut rng, 16);
        let h = dense_power(&m, 0.5).unwrap();
        let back = DenseSym::from_row_major(16, h.matmul(&h)).unwrap();
        assert!(back.sub(&m).max_abs() < 1e-10 * m.max_abs());
    }

    #[test]
    fn powers_are_inverse_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_pd(&mut rng, 10);
        for p in [0.5, 1.0, 0.3] {
            let a = dense_power(&m, p).unwrap();
            let b = dense_power(&m, -p).unwrap();
            let prod = DenseSym::from_row_major(10, a.matmul(&b)).unwrap();
            assert!(prod.sub(&DenseSym::identity(10)).max_abs() < 1e-10);
        }
    }

    #[test]
    fn negative_power_needs_positive_definite() {
        let s = DenseSym::diagonal(&[1.0, 0.0]);
        assert!(matches!(dense_power(&s, -1.0), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn loewner_identity_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_pd(&mut rng, 8);
        let r = loewner_check(&b, &b, 0.0).unwrap();
        assert!(r.eps_measured < 1e-12);
        let a = b.scaled(0.1f64.exp());
        let r = loewner_check(&a, &b, 0.1 + 1e-12).unwrap();
        assert!((r.eps_measured - 0.1).abs() < 1e-12);
        assert!(r.pass);
        assert!(!loewner_check(&a, &b, 0.099).unwrap().pass);
    }

    #[test]
    fn loewner_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_pd(&mut rng, 9);
        let b = random_pd(&mut rng, 9);
        let ab = loewner_check(&a, &b, 1.0).unwrap().eps_measured;
        let ba = loewner_check(&b, &a, 1.0).unwrap().eps_measured;
        assert!((ab - ba).abs() < 1e-10 * ab.max(1.0));
    }

    #[test]
    fn loewner_rejects_indefinite_reference() {
        let a = DenseSym::identity(2);
        let b = DenseSym::diagonal(&[1.0, -1.0]);
        assert!(matches!(loewner_check(&a, &b, 1.0), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&SparseSymMatrix::zeros(4)).value, 0.0);
        let x = SparseSymMatrix::from_triplets(2, [(0, 0, 1.0 / 3.0), (0, 1, 1.0 / 3.0), (1, 1, 1.0 / 3.0)])
            .unwrap();
        assert!((spectral_radius(&x).value - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn dense_and_iterative_radius_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, rng.random_range(0.0..0.2)));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j > i {
                    t.push((i, j, rng.random_range(0.0..0.1)));
                }
            }
        }
        let x = SparseSymMatrix::from_summed_triplets(n, t).unwrap();
        let dense = spectral_radius_with(&x, 512);
        let iter = spectral_radius_with(&x, 0);
        assert!(dense.dense && !iter.dense);
        assert!((dense.value - iter.value).abs() < 1e-6, "{} vs {}", dense.value, iter.value);
    }

    #[test]
    fn fact_suite_passes() {
        let r = fact_suite(30, 11);
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn broken_transitivity_bound_is_detected() {
        let r = fact_suite_with(
            30,
            12,
            FactSuiteOptions {
                transitivity_scale: 0.5,
                ..Default::default()
            },
        );
        assert!(r.get("c_transitive").unwrap().failures > 0);
    }
}
