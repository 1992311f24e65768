//! Truncated binomial series for `λ ↦ λ^p` around `λ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::operator::LinearOperator;

/// Degree-`t` truncation `g(x) = Σ a_k x^k` of `(1 - x)^p`, used as
/// `T(λ) = g(1 - λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaclaurinPoly {
    pub p: f64,
    pub t: usize,
    pub coeffs: Vec<f64>,
    pub delta: f64,
    pub eps: f64,
}

/// `a_0 = 1`, `a_{k+1} = -a_k (p - k) / (k + 1)`.
pub fn coeffs(p: f64, t: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(t + 1);
    a.push(1.0);
    for k in 0..t {
        let next = -a[k] * (p - k as f64) / (k as f64 + 1.0);
        a.push(next);
    }
    a
}

/// `δ^{t+1} / (1 - δ)`, the residual bound on `|x| <= δ`.
pub fn residual_bound(delta: f64, t: usize) -> f64 {
    delta.powi(t as i32 + 1) / (1.0 - delta)
}

/// Smallest `t` with `δ^{t+1} / (1 - δ)^2 <= eps`.
///
/// Panics unless `0 < delta < 1` and `eps > 0`.
pub fn degree_for(p: f64, delta: f64, eps: f64) -> usize {
    let _ = p;
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    assert!(eps > 0.0, "eps must be positive");
    let denom = (1.0 - delta) * (1.0 - delta);
    let mut t = 0usize;
    while delta.powi(t as i32 + 1) / denom > eps {
        t += 1;
    }
    t
}

/// Closed-form ceiling `⌈ln(1 / (eps (1 - δ)^2)) / (1 - δ)⌉`, never smaller
/// than [`degree_for`].
pub fn degree_ceiling(delta: f64, eps: f64) -> usize {
    let v = (1.0 / (eps * (1.0 - delta) * (1.0 - delta))).ln() / (1.0 - delta);
    v.max(0.0).ceil() as usize
}

/// Degree for which `exp(-eps) λ^p <= T(λ) <= exp(eps) λ^p` follows from
/// the residual bound: the relative error must stay below `1 - exp(-eps)`,
/// which is slightly tighter than `eps`.
pub fn sandwich_degree(p: f64, delta: f64, eps: f64) -> usize {
    degree_for(p, delta, -(-eps).exp_m1())
}

impl MaclaurinPoly {
    /// Polynomial certified to `eps` on `[1 - δ, 1 + δ]`.
    pub fn new(p: f64, delta: f64, eps: f64) -> Self {
        Self::with_degree(p, sandwich_degree(p, delta, eps), delta, eps)
    }

    pub fn with_degree(p: f64, t: usize, delta: f64, eps: f64) -> Self {
        MaclaurinPoly {
            p,
            t,
            coeffs: coeffs(p, t),
            delta,
            eps,
        }
    }

    /// `g(x)` by Horner.
    pub fn eval_series(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    /// `T(λ) = g(1 - λ)`.
    pub fn eval_scalar(&self, lambda: f64) -> f64 {
        self.eval_series(1.0 - lambda)
    }

    /// `T(αI + βX) v` with `t` products by `X`.
    pub fn apply_operator_poly(
        &self,
        x: &impl LinearOperator,
        shift_scale: (f64, f64),
        v: &[f64],
    ) -> Result<Vec<f64>> {
        check_len(x.dim(), v.len())?;
        let (alpha, beta) = shift_scale;
        let a = &self.coeffs;
        let mut w: Vec<f64> = v.iter().map(|vi| a[self.t] * vi).collect();
        let mut xw = vec![0.0; v.len()];
        for k in (0..self.t).rev() {
            x.apply_to(&w, &mut xw);
            for i in 0..v.len() {
                w[i] = a[k] * v[i] + (1.0 - alpha) * w[i] - beta * xw[i];
            }
        }
        Ok(w)
    }
}

/// Free-function form of [`MaclaurinPoly::eval_scalar`].
pub fn eval_scalar(poly: &MaclaurinPoly, lambda: f64) -> f64 {
    poly.eval_scalar(lambda)
}

/// Free-function form of [`MaclaurinPoly::apply_operator_poly`].
pub fn apply_operator_poly(
    poly: &MaclaurinPoly,
    x: &impl LinearOperator,
    shift_scale: (f64, f64),
    v: &[f64],
) -> Result<Vec<f64>> {
    poly.apply_operator_poly(x, shift_scale, v)
}
