//! Test instances: weighted graph Laplacians plus a diagonal slack.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Path,
    Grid2d,
    RandomRegular,
    SddMixed,
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(InstanceKind::Path),
            "grid2d" => Ok(InstanceKind::Grid2d),
            "random_regular" => Ok(InstanceKind::RandomRegular),
            "sdd_mixed" => Ok(InstanceKind::SddMixed),
            other => Err(Error::InvalidParams(format!("unknown instance kind {other:?}"))),
        }
    }
}

/// `L(G) + slack · I` from unit-weight or weighted edges.
fn laplacian_plus_slack(n: usize, edges: &[(usize, usize, f64)], slack: f64) -> Result<SparseSymMatrix> {
    let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, slack)).collect();
    for &(u, v, w) in edges {
        t.push((u, v, -w));
        t.push((u, u, w));
        t.push((v, v, w));
    }
    SparseSymMatrix::from_summed_triplets(n, t)
}

fn check(size: usize, slack: f64) -> Result<()> {
    if size == 0 {
        return Err(Error::InvalidParams("size must be at least 1".into()));
    }
    if !(slack > 0.0 && slack.is_finite()) {
        return Err(Error::InvalidParams(format!("slack = {slack} must be positive")));
    }
    Ok(())
}

/// Path graph on `n` vertices.
pub fn path(n: usize, slack: f64) -> Result<SparseSymMatrix> {
    check(n, slack)?;
    let e: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
    laplacian_plus_slack(n, &e, slack)
}

/// `side x side` grid, row-major vertex numbering.
pub fn grid2d(side: usize, slack: f64) -> Result<SparseSymMatrix> {
    check(side, slack)?;
    let id = |r: usize, c: usize| r * side + c;
    let mut e = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                e.push((id(r, c), id(r, c + 1), 1.0));
            }
            if r + 1 < side {
                e.push((id(r, c), id(r + 1, c), 1.0));
            }
        }
    }
    laplacian_plus_slack(side * side, &e, slack)
}

/// Union of `degree / 2` random Hamiltonian cycles; coinciding edges are
/// merged with summed weight, so every vertex has weighted degree `degree`.
pub fn random_regular(n: usize, degree: usize, slack: f64, seed: u64) -> Result<SparseSymMatrix> {
    check(n, slack)?;
    if degree % 2 != 0 || degree == 0 {
        return Err(Error::InvalidParams(format!("degree {degree} must be even and positive")));
    }
    if n < 3 {
        return Err(Error::InvalidParams("random_regular needs n >= 3".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut e = Vec::new();
    for _ in 0..degree / 2 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for i in 0..n {
            e.push((perm[i], perm[(i + 1) % n], 1.0));
        }
    }
    laplacian_plus_slack(n, &e, slack)
}

/// Random cycle-plus-chords graph whose off-diagonal signs are mixed: each
/// edge is positive with probability one half, and at least one is.
/// Diagonal is `Σ_j |m_ij| + slack`.
pub fn sdd_mixed(n: usize, slack: f64, seed: u64) -> Result<SparseSymMatrix> {
    check(n, slack)?;
    if n < 2 {
        return Err(Error::InvalidParams("sdd_mixed needs n >= 2".into()));
    }
    let mut rng = stream_rng(seed, 1);
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        edges.push((i, i + 1));
    }
    for _ in 0..n / 2 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort();
    edges.dedup();
    let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, slack)).collect();
    let mut any_positive = false;
    for (k, &(u, v)) in edges.iter().enumerate() {
        let w = rng.random_range(0.5..1.5);
        let positive = rng.random::<bool>() || (!any_positive && k + 1 == edges.len());
        any_positive |= positive;
        t.push((u, v, if positive { w } else { -w }));
        t.push((u, u, w));
        t.push((v, v, w));
    }
    SparseSymMatrix::from_summed_triplets(n, t)
}

/// Random connected SDDM matrix: a random spanning path plus `extra` random
/// edges, weights in `[0.5, 2)`, and row slacks in `[slack, 2 slack)`.
pub fn random_sddm(n: usize, extra: usize, slack: f64, seed: u64) -> Result<SparseSymMatrix> {
    check(n, slack)?;
    let mut rng = stream_rng(seed, 2);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut e: Vec<(usize, usize, f64)> = perm
        .windows(2)
        .map(|w| (w[0], w[1], rng.random_range(0.5..2.0)))
        .collect();
    if n >= 2 {
        for _ in 0..extra {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                e.push((u, v, rng.random_range(0.5..2.0)));
            }
        }
    }
    let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, rng.random_range(slack..2.0 * slack))).collect();
    for &(u, v, w) in &e {
        t.push((u, v, -w));
        t.push((u, u, w));
        t.push((v, v, w));
    }
    SparseSymMatrix::from_summed_triplets(n, t)
}

/// Dispatches on [`InstanceKind`]; `size` is `n`, or the side for grids.
pub fn generate(kind: InstanceKind, size: usize, slack: f64, degree: usize, seed: u64) -> Result<SparseSymMatrix> {
    match kind {
        InstanceKind::Path => path(size, slack),
        InstanceKind::Grid2d => grid2d(size, slack),
        InstanceKind::RandomRegular => random_regular(size, degree, slack, seed),
        InstanceKind::SddMixed => sdd_mixed(size, slack, seed),
    }
}
