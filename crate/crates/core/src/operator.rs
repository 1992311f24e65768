//! Symmetric linear operators and the iterative kernels that only need
//! matrix-vector products: power iteration, Lanczos extreme eigenvalues and
//! conjugate gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::symmetric_eigenvalues;

/// A square symmetric operator accessed only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`. Both slices have length `dim()`.
    fn apply_to(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_to(x, &mut y);
        y
    }
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOperator { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply_to(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm(&v);
    if nv == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= nv);
    }
    v
}

/// Outcome of an iterative eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the largest-magnitude eigenvalue of a symmetric
/// operator. Returns `|λ|max`; the estimate approaches from below.
pub fn power_iteration(
    op: &impl LinearOperator,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Estimate {
    let n = op.dim();
    if n == 0 {
        return Estimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut x = random_unit(n, seed);
    let mut y = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=max_iter {
        op.apply_to(&x, &mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Estimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if it > 1 && (ny - prev).abs() <= tol * ny {
            return Estimate {
                value: ny,
                iterations: it,
                converged: true,
            };
        }
        prev = ny;
    }
    Estimate {
        value: prev,
        iterations: max_iter,
        converged: false,
    }
}

/// Extreme Ritz values of a symmetric operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBounds {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    /// The Krylov space was exhausted (breakdown or `steps == dim`), so the
    /// Ritz values are eigenvalues.
    pub exhausted: bool,
}

impl SpectrumBounds {
    pub fn radius(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// Lanczos with full reorthogonalization. The returned Ritz values lie
/// inside the true spectrum; with `steps >= dim` they are exact up to
/// rounding.
pub fn lanczos_bounds(op: &impl LinearOperator, steps: usize, seed: u64) -> SpectrumBounds {
    let n = op.dim();
    if n == 0 {
        return SpectrumBounds {
            min: 0.0,
            max: 0.0,
            steps: 0,
            exhausted: true,
        };
    }
    let k = steps.clamp(1, n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut q = random_unit(n, seed);
    let mut w = vec![0.0; n];
    let mut exhausted = k == n;
    for j in 0..k {
        op.apply_to(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q.clone());
        // two passes of Gram-Schmidt keep the basis orthogonal to rounding
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);
        let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
        if b <= 1e-12 * scale {
            exhausted = true;
            break;
        }
        if j + 1 == k {
            break;
        }
        beta.push(b);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / b);
    }
    let m = alpha.len();
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        t[i * m + i] = alpha[i];
        if i + 1 < m {
            t[i * m + i + 1] = beta[i];
            t[(i + 1) * m + i] = beta[i];
        }
    }
    let ev = symmetric_eigenvalues(&t, m);
    SpectrumBounds {
        min: ev.iter().cloned().fold(f64::INFINITY, f64::min),
        max: ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        steps: m,
        exhausted,
    }
}

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator.
pub fn conjugate_gradient(
    op: &impl LinearOperator,
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgSolution {
    let n = op.dim();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        op.apply_to(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
            };
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm(&r) / bn;
        if rel <= tol {
            return CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgSolution {
        x,
        iterations: max_iter,
        relative_residual: rel,
    }
}
