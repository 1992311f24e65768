use proptest::prelude::*;

use sddmfac::gen;
use sddmfac::oracle::{cholesky, dense_power, loewner_check, DenseSym};
use sddmfac::rng::normals;
use sddmfac::sampler::{
    covariance_check, mean_check, prepare, read_bin, sample_edge_based, write_bin, write_csv, BatchSidecar,
    GaussianField, SampleBatch,
};
use sddmfac::sparsify::SparsifyParams;
use sddmfac::{edge_factor, Error, SparseSymMatrix};

fn sp() -> SparsifyParams {
    SparsifyParams::default()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Columns of the sampler's (projected) factor, read off through
/// `transform` on a zero-mean sampler.
fn projected_gram(field: &GaussianField, eps: f64) -> DenseSym {
    let s = prepare(field, eps, &sp()).unwrap();
    let (n, m) = (s.n(), s.noise_dim());
    let mut c = vec![0.0; n * m];
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        for (i, v) in s.transform(&e).unwrap().into_iter().enumerate() {
            c[i * m + j] = v;
        }
    }
    DenseSym::gram(&c, n, m)
}

#[test]
fn means() {
    let grid = gen::grid2d(4, 0.2).unwrap();
    let s = prepare(&GaussianField::centered(grid).unwrap(), 0.1, &sp()).unwrap();
    assert!(s.mean.iter().all(|&x| x == 0.0));

    let two = SparseSymMatrix::diagonal(&[2.0; 5]);
    let s = prepare(&GaussianField::new(two, vec![2.0; 5]).unwrap(), 0.1, &sp()).unwrap();
    for x in &s.mean {
        assert!((x - 1.0).abs() <= 0.1);
    }

    let m = gen::grid2d(8, 0.05).unwrap();
    let h: Vec<f64> = (0..64).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let s = prepare(&GaussianField::new(m.clone(), h.clone()).unwrap(), 0.1, &sp()).unwrap();
    let want = dense_power(&m.to_dense(), -1.0).unwrap().matvec(&h);
    let diff: Vec<f64> = s.mean.iter().zip(&want).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) / norm(&want) <= 1e-8);
    let r: Vec<f64> = m.mul_vec(&s.mean).unwrap().iter().zip(&h).map(|(a, b)| a - b).collect();
    assert!(norm(&r) / norm(&h) <= 1e-8);
}

#[test]
fn empty_batch() {
    let s = prepare(&GaussianField::centered(gen::path(5, 1.0).unwrap()).unwrap(), 0.1, &sp()).unwrap();
    let b = s.sample(0, 1);
    assert_eq!((b.count, b.gaussians_consumed, b.samples.len()), (0, 0, 0));
    assert!(covariance_check(&b, &DenseSym::identity(5), 3.0).unwrap().insufficient_data);
    assert!(covariance_check(&s.sample(1, 1), &DenseSym::identity(5), 3.0).unwrap().insufficient_data);
}

#[test]
fn identity_precision_gives_standard_normals() {
    let s = prepare(&GaussianField::centered(SparseSymMatrix::identity(6)).unwrap(), 0.1, &sp()).unwrap();
    let b = s.sample(100_000, 3);
    let cov = b.sample_covariance();
    for i in 0..6 {
        assert!((cov.get(i, i) - 1.0).abs() <= 0.02);
        for j in (0..6).filter(|&j| j != i) {
            assert!(cov.get(i, j).abs() <= 0.02, "({i},{j}) = {}", cov.get(i, j));
        }
    }
}

#[test]
fn grid_covariance_node_and_edge() {
    let lam = gen::grid2d(4, 0.1).unwrap();
    let target = dense_power(&lam.to_dense(), -1.0).unwrap();
    let field = GaussianField::centered(lam.clone()).unwrap();
    let count = 200_000;

    let node = prepare(&field, 0.1, &sp()).unwrap().sample(count, 7);
    assert_eq!(node.gaussians_consumed, (count * 16) as u64);
    let r = covariance_check(&node, &target, 3.0).unwrap();
    assert!(r.pass_fraction >= 0.99, "{r:?}");

    let edge = sample_edge_based(&field, 0.1, &sp(), count, 7).unwrap();
    let cols = edge_factor(&lam).unwrap().columns();
    assert!(cols > 16);
    assert_eq!(edge.gaussians_consumed, (count * cols) as u64);
    assert!(edge.gaussians_consumed > node.gaussians_consumed);
    let r = covariance_check(&edge, &target, 3.0).unwrap();
    assert!(r.pass_fraction >= 0.99, "{r:?}");
}

#[test]
fn sample_mean_within_four_standard_errors() {
    let lam = gen::grid2d(4, 0.1).unwrap();
    let h: Vec<f64> = (0..16).map(|i| (i as f64 * 0.9).cos()).collect();
    let s = prepare(&GaussianField::new(lam, h).unwrap(), 0.1, &sp()).unwrap();
    let b = s.sample(100_000, 21);
    let r = mean_check(&b, &s.mean, 4.0).unwrap();
    assert_eq!(r.passed, r.entries, "{r:?}");
}

#[test]
fn diagonal_edge_based_is_scaled_normals() {
    let d = [1.0, 4.0, 9.0];
    let field = GaussianField::centered(SparseSymMatrix::diagonal(&d)).unwrap();
    let s = prepare(&field, 0.1, &sp()).unwrap().into_edge_based().unwrap();
    assert_eq!(s.noise_dim(), 3);
    let z = [1.0, 1.0, 1.0];
    let x = s.transform(&z).unwrap();
    for (xi, di) in x.iter().zip(&d) {
        // Z B z = d⁻¹ √d z
        assert!((xi - 1.0 / di.sqrt()).abs() <= 1e-6);
    }
}

#[test]
fn lifted_sampler_accounting_and_covariance() {
    let lam = gen::sdd_mixed(8, 0.5, 2).unwrap();
    let field = GaussianField::centered(lam.clone()).unwrap();
    assert!(field.lifted.is_some());
    let s = prepare(&field, 0.1, &sp()).unwrap();
    assert_eq!((s.n(), s.noise_dim()), (8, 16));
    let b = s.sample(100_000, 5);
    assert_eq!(b.gaussians_consumed, 1_600_000);
    let target = dense_power(&lam.to_dense(), -1.0).unwrap();
    let r = covariance_check(&b, &target, 3.0).unwrap();
    assert!(r.pass_fraction >= 0.95, "{r:?}");
}

#[test]
fn covariance_target_in_loewner_order() {
    for lam in [gen::grid2d(5, 0.1).unwrap(), gen::random_sddm(40, 60, 0.05, 3).unwrap(), gen::sdd_mixed(20, 0.3, 4).unwrap()] {
        let eps = 1e-3;
        let g = projected_gram(&GaussianField::centered(lam.clone()).unwrap(), eps);
        let r = loewner_check(&g, &dense_power(&lam.to_dense(), -1.0).unwrap(), eps).unwrap();
        assert!(r.pass, "eps_measured {}", r.eps_measured);
    }
}

#[test]
fn dense_cache_does_not_change_samples_beyond_rounding() {
    let s = prepare(&GaussianField::centered(gen::grid2d(4, 0.3).unwrap()).unwrap(), 0.1, &sp()).unwrap();
    assert!(s.has_dense_cache());
    let a = s.sample(50, 9);
    let b = s.clone().without_dense_cache().sample(50, 9);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn covariance_check_calibration_and_power() {
    // two vertices: the diagonal shift moves two of the three tested entries
    let target = dense_power(&gen::path(2, 0.5).unwrap().to_dense(), -1.0).unwrap();
    let n = target.n();
    let l = cholesky(&target).unwrap();
    let count = 50_000;
    let mut samples = Vec::with_capacity(count * n);
    for k in 0..count {
        let z = normals(99, k as u64, n);
        samples.extend((0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum::<f64>()));
    }
    let batch = SampleBatch {
        n,
        count,
        samples,
        seed: 99,
        gaussians_consumed: (count * n) as u64,
        mean_used: vec![0.0; n],
    };
    assert!(covariance_check(&batch, &target, 3.0).unwrap().pass_fraction >= 0.95);
    let shifted = target.add(&DenseSym::identity(n).scaled(0.5));
    assert!(covariance_check(&batch, &shifted, 3.0).unwrap().pass_fraction < 0.5);
}

#[test]
fn writers_round_trip() {
    let s = prepare(&GaussianField::centered(gen::path(4, 1.0).unwrap()).unwrap(), 0.1, &sp()).unwrap();
    let b = s.sample(5, 2);
    let mut bin = Vec::new();
    write_bin(&mut bin, &b).unwrap();
    assert_eq!(bin.len(), 5 * 4 * 8);
    assert_eq!(read_bin(&bin, 4).unwrap().samples, b.samples);
    assert!(matches!(read_bin(&bin[..9], 4), Err(Error::Parse(_))));

    let mut csv = Vec::new();
    write_csv(&mut csv, &b).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("0,1,2,3"));
    let parsed: Vec<f64> = lines.flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap())).collect();
    assert_eq!(parsed, b.samples);

    let side = serde_json::to_value(BatchSidecar::new(&b, 0.1)).unwrap();
    assert_eq!(side["n"], 4);
    assert_eq!(side["count"], 5);
    assert_eq!(side["seed"], 2);
    assert_eq!(side["eps"], 0.1);
}

fn field() -> impl Strategy<Value = GaussianField> {
    (3usize..12, 0.1f64..1.0, any::<u64>(), any::<bool>()).prop_map(|(n, slack, seed, mixed)| {
        let lam = if mixed {
            gen::sdd_mixed(n, slack, seed).unwrap()
        } else {
            gen::random_sddm(n, n, slack, seed).unwrap()
        };
        GaussianField::centered(lam).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reproducible_and_accounted(f in field(), seed in any::<u64>(), count in 1usize..40) {
        let s = prepare(&f, 0.1, &sp()).unwrap();
        let per = if f.lifted.is_some() { 2 * f.n() } else { f.n() };
        prop_assert_eq!(s.noise_dim(), per);
        let a = s.sample(count, seed);
        let b = s.sample(count, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.gaussians_consumed, (count * per) as u64);
        let tail = s.sample_range(seed, 3.min(count as u64), count - 3.min(count));
        prop_assert_eq!(&a.samples[3.min(count) * f.n()..], &tail.samples[..]);
    }
}
