//! Gaussian random field sampling: `x = C̃ z + μ` with `C̃ C̃ᵀ ≈ Λ⁻¹` and
//! `μ = Λ⁻¹ h`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::FactorArtifact;
use crate::error::{check_len, Error, Result};
use crate::factor::{build_factor, refine_inverse_factor, solve, Factor, FactorConfig, FactorOperator};
use crate::gremban::{gremban_lift, gremban_project, lift_vector, GrembanLift};
use crate::oracle::{mat_mul, DenseSym};
use crate::rng::normals;
use crate::sddm::validate_sddm;
use crate::sparse::SparseSymMatrix;
use crate::sparsify::SparsifyParams;

/// Accuracy of the factor used for the mean solve.
pub const MEAN_EPS: f64 = 1e-10;

/// Largest `n x m` factor kept as a dense matrix for sampling.
pub const DENSE_CACHE_LIMIT: usize = 1 << 20;

/// Density `∝ exp(-½ xᵀΛx + hᵀx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    pub precision: SparseSymMatrix,
    pub potential: Vec<f64>,
    /// Present when `Λ` has positive off-diagonals.
    pub lifted: Option<GrembanLift>,
}

impl GaussianField {
    /// Accepts SDDM precisions directly and lifts SDD ones with positive
    /// off-diagonals.
    pub fn new(precision: SparseSymMatrix, potential: Vec<f64>) -> Result<Self> {
        check_len(precision.n(), potential.len())?;
        let cert = validate_sddm(&precision);
        let lifted = if cert.is_sddm {
            None
        } else {
            Some(gremban_lift(&precision)?)
        };
        Ok(GaussianField {
            precision,
            potential,
            lifted,
        })
    }

    /// Zero potential.
    pub fn centered(precision: SparseSymMatrix) -> Result<Self> {
        let n = precision.n();
        Self::new(precision, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.precision.n()
    }

    /// Matrix that is actually factored.
    pub fn factored_matrix(&self) -> &SparseSymMatrix {
        match &self.lifted {
            Some(l) => &l.s,
            None => &self.precision,
        }
    }
}

/// Mean `Λ⁻¹ h` through a high-accuracy refinement of the operator's chain.
/// `h` lives in the factored space (already lifted if needed).
pub fn factored_mean(op: &FactorOperator, matrix: &SparseSymMatrix, h: &[f64]) -> Result<Vec<f64>> {
    check_len(matrix.n(), h.len())?;
    if h.iter().all(|&x| x == 0.0) {
        return Ok(vec![0.0; h.len()]);
    }
    if op.p() != -1.0 {
        return Err(Error::WrongExponent {
            expected: -1.0,
            actual: op.p(),
        });
    }
    let fine = match op {
        FactorOperator::Refined(r) => r.with_eps(MEAN_EPS),
        FactorOperator::EdgeBased(e) => e.inverse.with_eps(MEAN_EPS),
        FactorOperator::Chain(c) => refine_inverse_factor(matrix, c.clone(), MEAN_EPS, None)?,
    };
    solve(&fine, h)
}

/// A factor of `Λ⁻¹` (or of the lift's inverse) plus the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSampler {
    pub artifact: FactorArtifact,
    /// `μ` in the original dimension.
    pub mean: Vec<f64>,
    pub eps: f64,
    /// Row-major `n x noise_dim` copy of the (projected) factor, assembled
    /// column by column from the operator when it is small.
    dense: Option<Vec<f64>>,
}

/// Builds the factor at accuracy `eps` and solves for the mean.
pub fn prepare(field: &GaussianField, eps: f64, sp: &SparsifyParams) -> Result<PreparedSampler> {
    let matrix = field.factored_matrix().clone();
    let cfg = FactorConfig {
        p: -1.0,
        eps,
        sparsify: sp.clone(),
        ..Default::default()
    };
    let operator = build_factor(&matrix, &cfg)?;
    let artifact = FactorArtifact {
        operator,
        matrix,
        lifted_from: field.lifted.as_ref().map(|l| l.n()),
    };
    PreparedSampler::from_artifact(artifact, Some(&field.potential), eps)
}

impl PreparedSampler {
    /// Wraps a stored factor; `h` is in the original dimension.
    pub fn from_artifact(artifact: FactorArtifact, h: Option<&[f64]>, eps: f64) -> Result<Self> {
        let p = artifact.operator.p();
        if p != -1.0 {
            return Err(Error::WrongExponent {
                expected: -1.0,
                actual: p,
            });
        }
        let n = artifact.lifted_from.unwrap_or(artifact.matrix.n());
        let mean = match h {
            None => vec![0.0; n],
            Some(h) => {
                check_len(n, h.len())?;
                match artifact.lifted_from {
                    Some(n0) => {
                        let lifted = lift_vector(h, n0)?;
                        let mu = factored_mean(&artifact.operator, &artifact.matrix, &lifted)?;
                        gremban_project(&mu, n0)?
                    }
                    None => factored_mean(&artifact.operator, &artifact.matrix, h)?,
                }
            }
        };
        let mut s = PreparedSampler {
            artifact,
            mean,
            eps,
            dense: None,
        };
        s.dense = s.assemble(DENSE_CACHE_LIMIT);
        Ok(s)
    }

    fn assemble(&self, limit: usize) -> Option<Vec<f64>> {
        let (n, m) = (self.n(), self.noise_dim());
        if n * m > limit {
            return None;
        }
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                self.apply_projected(&e)
            })
            .collect();
        let mut out = vec![0.0; n * m];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                out[i * m + j] = c[i];
            }
        }
        Some(out)
    }

    /// Drops the dense copy so every sample goes through the operator.
    pub fn without_dense_cache(mut self) -> Self {
        self.dense = None;
        self
    }

    pub fn has_dense_cache(&self) -> bool {
        self.dense.is_some()
    }

    fn apply_projected(&self, z: &[f64]) -> Vec<f64> {
        let y = self.artifact.operator.apply_unchecked(z);
        match self.artifact.lifted_from {
            Some(n0) => gremban_project(&y, n0).expect("lifted factor has 2n rows"),
            None => y,
        }
    }

    /// Dimension of each sample.
    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// Gaussians drawn per sample.
    pub fn noise_dim(&self) -> usize {
        self.artifact.operator.input_dim()
    }

    /// Switches to the edge-based factor `Z B`.
    pub fn into_edge_based(self) -> Result<Self> {
        let cached = self.dense.is_some();
        let operator = self.artifact.operator.into_edge_based(&self.artifact.matrix)?;
        let mut s = PreparedSampler {
            artifact: FactorArtifact { operator, ..self.artifact },
            dense: None,
            ..self
        };
        if cached {
            s.dense = s.assemble(DENSE_CACHE_LIMIT);
        }
        Ok(s)
    }

    /// `C̃ z + μ` for a given noise vector.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.noise_dim(), z.len())?;
        let mut x = match &self.dense {
            Some(c) => mat_mul(c, z, self.n(), z.len(), 1),
            None => self.apply_projected(z),
        };
        x.iter_mut().zip(&self.mean).for_each(|(a, m)| *a += m);
        Ok(x)
    }

    /// Sample `first + k` uses noise stream `first + k`, so batches can be
    /// produced in pieces with the same result.
    pub fn sample_range(&self, seed: u64, first: u64, count: usize) -> SampleBatch {
        let n = self.n();
        let m = self.noise_dim();
        let rows: Vec<Vec<f64>> = (0..count)
            .into_par_iter()
            .map(|k| {
                let z = normals(seed, first + k as u64, m);
                self.transform(&z).expect("noise has the factor's input dimension")
            })
            .collect();
        SampleBatch {
            n,
            count,
            samples: rows.concat(),
            seed,
            gaussians_consumed: (count * m) as u64,
            mean_used: self.mean.clone(),
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> SampleBatch {
        self.sample_range(seed, 0, count)
    }
}

/// One-shot sampling with the edge-based factor.
pub fn sample_edge_based(
    field: &GaussianField,
    eps: f64,
    sp: &SparsifyParams,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    Ok(prepare(field, eps, sp)?.into_edge_based()?.sample(count, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n: usize,
    pub count: usize,
    /// Row-major `count x n`.
    pub samples: Vec<f64>,
    pub seed: u64,
    pub gaussians_consumed: u64,
    pub mean_used: Vec<f64>,
}

impl SampleBatch {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.samples[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n.max(1)).take(self.count)
    }

    pub fn sample_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        let c = self.count.max(1) as f64;
        m.iter_mut().for_each(|a| *a /= c);
        m
    }

    /// Unbiased sample covariance about the sample mean.
    pub fn sample_covariance(&self) -> DenseSym {
        self.moments().0
    }

    /// Sample covariance and the fourth moments `mean((x_i-x̄_i)²(x_j-x̄_j)²)`.
    fn moments(&self) -> (DenseSym, DenseSym) {
        let n = self.n;
        let mean = self.sample_mean();
        let centered: Vec<f64> = self
            .rows()
            .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect::<Vec<_>>())
            .collect();
        let count = self.count;
        let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = vec![0.0; n];
                let mut q = vec![0.0; n];
                for k in 0..count {
                    let r = &centered[k * n..(k + 1) * n];
                    let ri = r[i];
                    for j in i..n {
                        let p = ri * r[j];
                        s[j] += p;
                        q[j] += p * p;
                    }
                }
                (s, q)
            })
            .collect();
        let denom = (count.max(2) - 1) as f64;
        let mut cov = DenseSym::zeros(n);
        let mut m4 = DenseSym::zeros(n);
        for (i, (s, q)) in per_row.iter().enumerate() {
            for j in i..n {
                cov.set_sym(i, j, s[j] / denom);
                m4.set_sym(i, j, q[j] / count.max(1) as f64);
            }
        }
        (cov, m4)
    }
}

/// Entrywise z-test summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZReport {
    pub count: usize,
    pub entries: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub max_abs_z: f64,
    pub z_threshold: f64,
    /// Fewer than two samples: no standard errors can be formed.
    pub insufficient_data: bool,
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn summarize(count: usize, z: &[f64], thr: f64) -> ZReport {
    let passed = z.iter().filter(|v| v.abs() <= thr).count();
    ZReport {
        count,
        entries: z.len(),
        passed,
        pass_fraction: if z.is_empty() { 0.0 } else { passed as f64 / z.len() as f64 },
        max_abs_z: z.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        z_threshold: thr,
        insufficient_data: false,
    }
}

fn insufficient(count: usize, thr: f64) -> ZReport {
    ZReport {
        count,
        entries: 0,
        passed: 0,
        pass_fraction: 0.0,
        max_abs_z: 0.0,
        z_threshold: thr,
        insufficient_data: true,
    }
}

/// z-scores of the sample covariance against `target` over the upper
/// triangle, with standard errors `√((m4_ij - Σ̂_ij²) / N)` from sample
/// moments.
pub fn covariance_check(batch: &SampleBatch, target: &DenseSym, z_threshold: f64) -> Result<ZReport> {
    check_len(batch.n, target.n())?;
    if batch.count < 2 {
        return Ok(insufficient(batch.count, z_threshold));
    }
    let (cov, m4) = batch.moments();
    let nf = batch.count as f64;
    let mut z = Vec::with_capacity(batch.n * (batch.n + 1) / 2);
    for i in 0..batch.n {
        for j in i..batch.n {
            let s = cov.get(i, j);
            let se = ((m4.get(i, j) - s * s).max(0.0) / nf).sqrt();
            z.push(z_score(s - target.get(i, j), se));
        }
    }
    Ok(summarize(batch.count, &z, z_threshold))
}

/// z-scores of the sample mean against `mu`, with standard errors
/// `√(Σ̂_ii / N)`.
pub fn mean_check(batch: &SampleBatch, mu: &[f64], z_threshold: f64) -> Result<ZReport> {
    check_len(batch.n, mu.len())?;
    if batch.count < 2 {
        return Ok(insufficient(batch.count, z_threshold));
    }
    let mean = batch.sample_mean();
    let cov = batch.sample_covariance();
    let nf = batch.count as f64;
    let z: Vec<f64> = (0..batch.n)
        .map(|i| z_score(mean[i] - mu[i], (cov.get(i, i) / nf).sqrt()))
        .collect();
    Ok(summarize(batch.count, &z, z_threshold))
}

/// Metadata written next to a binary batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSidecar {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub eps: f64,
    pub gaussians_consumed: u64,
    pub dtype: String,
    pub layout: String,
}

impl BatchSidecar {
    pub fn new(batch: &SampleBatch, eps: f64) -> Self {
        BatchSidecar {
            n: batch.n,
            count: batch.count,
            seed: batch.seed,
            eps,
            gaussians_consumed: batch.gaussians_consumed,
            dtype: "f64le".into(),
            layout: "row-major".into(),
        }
    }
}

/// Header row `0,1,…,n-1`, then one sample per line.
pub fn write_csv(mut w: impl Write, batch: &SampleBatch) -> Result<()> {
    let header: Vec<String> = (0..batch.n).map(|i| i.to_string()).collect();
    writeln!(w, "{}", header.join(","))?;
    for r in batch.rows() {
        let line: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Raw little-endian `f64`, row-major.
pub fn write_bin(mut w: impl Write, batch: &SampleBatch) -> Result<()> {
    let bytes: Vec<u8> = batch.samples.iter().flat_map(|x| x.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_bin`] for a known `n`.
pub fn read_bin(bytes: &[u8], n: usize) -> Result<SampleBatch> {
    if n == 0 || bytes.len() % (8 * n) != 0 {
        return Err(Error::Parse(format!("{} bytes is not a whole number of rows of {n}", bytes.len())));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(SampleBatch {
        n,
        count: samples.len() / n,
        samples,
        seed: 0,
        gaussians_consumed: 0,
        mean_used: vec![0.0; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::oracle::{cholesky, dense_power};

    fn exact_batch(target: &DenseSym, count: usize, seed: u64) -> SampleBatch {
        let n = target.n();
        let l = cholesky(target).unwrap();
        let mut samples = Vec::with_capacity(count * n);
        for k in 0..count {
            let z = normals(seed, k as u64, n);
            samples.extend((0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum::<f64>()));
        }
        SampleBatch {
            n,
            count,
            samples,
            seed,
            gaussians_consumed: (count * n) as u64,
            mean_used: vec![0.0; n],
        }
    }

    #[test]
    fn zero_potential_gives_zero_mean() {
        let s = prepare(&GaussianField::centered(gen::path(8, 1.0).unwrap()).unwrap(), 0.1, &SparsifyParams::default())
            .unwrap();
        assert_eq!(s.mean, vec![0.0; 8]);
    }

    #[test]
    fn diagonal_mean() {
        let f = GaussianField::new(SparseSymMatrix::diagonal(&[2.0; 6]), vec![2.0; 6]).unwrap();
        let s = prepare(&f, 0.1, &SparsifyParams::default()).unwrap();
        assert!(s.mean.iter().all(|m| (m - 1.0).abs() < 1e-9));
    }

    #[test]
    fn empty_batch() {
        let s = prepare(&GaussianField::centered(gen::path(5, 1.0).unwrap()).unwrap(), 0.1, &SparsifyParams::default())
            .unwrap();
        let b = s.sample(0, 3);
        assert_eq!((b.count, b.gaussians_consumed, b.samples.len()), (0, 0, 0));
    }

    #[test]
    fn batches_are_reproducible_and_splittable() {
        let s = prepare(&GaussianField::centered(gen::grid2d(3, 0.5).unwrap()).unwrap(), 0.1, &SparsifyParams::default())
            .unwrap();
        let a = s.sample(20, 9);
        assert_eq!(a, s.sample(20, 9));
        let head = s.sample_range(9, 0, 12);
        let tail = s.sample_range(9, 12, 8);
        assert_eq!([head.samples, tail.samples].concat(), a.samples);
        assert_ne!(a.samples, s.sample(20, 10).samples);
        let slow = s.clone().without_dense_cache().sample(20, 9);
        for (x, y) in slow.samples.iter().zip(&a.samples) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lifted_field_consumes_twice_the_noise() {
        let m = gen::sdd_mixed(8, 0.5, 2).unwrap();
        let f = GaussianField::centered(m).unwrap();
        assert!(f.lifted.is_some());
        let s = prepare(&f, 0.1, &SparsifyParams::default()).unwrap();
        let b = s.sample(5, 1);
        assert_eq!(b.n, 8);
        assert_eq!(b.gaussians_consumed, 5 * 16);
    }

    #[test]
    fn not_sdd_is_rejected() {
        let m = SparseSymMatrix::from_triplets(2, [(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(GaussianField::centered(m), Err(Error::NotSdd(_))));
    }

    #[test]
    fn covariance_check_calibration_and_power() {
        let m = gen::path(2, 1.0).unwrap();
        let target = dense_power(&m.to_dense(), -1.0).unwrap();
        let b = exact_batch(&target, 20_000, 5);
        let ok = covariance_check(&b, &target, 3.0).unwrap();
        assert!(ok.pass_fraction >= 0.95, "{ok:?}");
        let shifted = target.add(&DenseSym::identity(2).scaled(0.5));
        let bad = covariance_check(&b, &shifted, 3.0).unwrap();
        assert!(bad.pass_fraction < 0.5, "{bad:?}");
        let one = exact_batch(&target, 1, 5);
        assert!(covariance_check(&one, &target, 3.0).unwrap().insufficient_data);
    }

    #[test]
    fn csv_and_bin_writers() {
        let b = SampleBatch {
            n: 2,
            count: 2,
            samples: vec![1.0, -0.5, 1e-300, 3.25],
            seed: 1,
            gaussians_consumed: 4,
            mean_used: vec![0.0; 2],
        };
        let mut csv = Vec::new();
        write_csv(&mut csv, &b).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "0,1\n1.0,-0.5\n1e-300,3.25\n");
        let mut bin = Vec::new();
        write_bin(&mut bin, &b).unwrap();
        assert_eq!(bin.len(), 32);
        assert_eq!(read_bin(&bin, 2).unwrap().samples, b.samples);
    }
}
