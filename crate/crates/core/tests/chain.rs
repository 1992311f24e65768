use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sddmfac::chain::{build_chain, planned_length, stop_radius};
use sddmfac::factor::{
    build_factor, edge_factor, refine_inverse_factor, solve, DenseFactor, EdgeBased, Factor, FactorConfig,
};
use sddmfac::gen;
use sddmfac::oracle::{dense_power, loewner_check, mat_mul, spectral_radius, DenseSym};
use sddmfac::sddm::{normalize, validate_sddm, Splitting};
use sddmfac::sparsify::{measure_step, SparsifyParams};
use sddmfac::SparseSymMatrix;

fn split(m: &SparseSymMatrix) -> Splitting {
    normalize(m, &validate_sddm(m)).unwrap()
}

fn measured(a: &DenseSym, b: &DenseSym) -> f64 {
    loewner_check(a, b, f64::INFINITY).unwrap().eps_measured
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn identity_matrix_gives_empty_chain() {
    let m = SparseSymMatrix::identity(5);
    let s = Splitting::from_parts(1.0, SparseSymMatrix::zeros(5), 2.0).unwrap();
    let chain = build_chain(&s, -1.0, 0.1, &SparsifyParams::default()).unwrap();
    assert_eq!(chain.d(), 0);
    let v = random_vec(5, 1);
    assert_eq!(chain.apply(&v).unwrap(), v);
    assert_eq!(chain.apply_transpose(&v).unwrap(), v);
    assert!(validate_sddm(&m).is_sddm);
}

#[test]
fn path_chain_growth_and_termination() {
    let m = gen::path(64, 0.05).unwrap();
    let s = split(&m);
    let eps = 0.5;
    let chain = build_chain(&s, -1.0, eps, &SparsifyParams::default()).unwrap();
    assert!(chain.d() <= planned_length(s.kappa_bound, eps) + 1);
    let lambdas: Vec<f64> = chain
        .levels
        .iter()
        .map(|x| 1.0 - spectral_radius(x).value)
        .collect();
    for w in lambdas.windows(2) {
        if w[0] <= 0.5 {
            assert!(w[1] >= 9.0 / 8.0 * w[0], "lambda {} -> {}", w[0], w[1]);
        }
    }
    let rho_d = spectral_radius(chain.levels.last().unwrap()).value;
    assert!(rho_d <= 5.0 / 6.0 * eps);
    assert!(rho_d <= stop_radius(eps));
}

#[test]
fn exact_mode_inverse_chain_on_random_sddm() {
    let m = gen::random_sddm(16, 20, 0.1, 4).unwrap();
    let chain = build_chain(&split(&m), -1.0, 0.05, &SparsifyParams::exact()).unwrap();
    let bound = chain.error_bound();
    let err = measured(&chain.gram(), &dense_power(&m.to_dense(), -1.0).unwrap());
    assert!(err <= bound, "measured {err} > bound {bound}");
}

#[test]
fn half_power_chain() {
    let m = gen::random_sddm(16, 24, 0.2, 8).unwrap();
    let eps = 0.2;
    let cfg = FactorConfig {
        p: 0.5,
        eps,
        ..Default::default()
    };
    let op = build_factor(&m, &cfg).unwrap();
    let err = measured(&op.gram(), &dense_power(&m.to_dense(), 0.5).unwrap());
    assert!(err <= eps, "measured {err}");
    assert!(err <= op.chain().error_bound());
}

#[test]
fn chain_level_reports_match_dense_measurement() {
    let m = gen::random_sddm(48, 100, 0.05, 6).unwrap();
    let chain = build_chain(&split(&m), -1.0, 0.5, &SparsifyParams::default()).unwrap();
    for (i, r) in chain.reports.iter().enumerate() {
        let got = measure_step(&chain.levels[i], &chain.levels[i + 1]).unwrap();
        assert!((r.eps_measured.unwrap() - got).abs() <= 1e-12, "level {i}: {:?} vs {got}", r.eps_measured);
        assert_eq!(r.nnz_out, chain.levels[i + 1].nnz());
    }
}

#[test]
fn edge_factor_two_by_two_columns() {
    let m = SparseSymMatrix::from_triplets(2, [(0, 0, 2.0), (0, 1, -1.0), (1, 1, 2.0)]).unwrap();
    let b = edge_factor(&m).unwrap();
    assert_eq!(b.columns(), 3);
    let dense = b.to_dense_matrix();
    // row-major 2 x 3: edge column then the two slack columns
    assert_eq!(dense, vec![1.0, 1.0, 0.0, -1.0, 0.0, 1.0]);
    assert_eq!(DenseSym::gram(&dense, 2, 3), m.to_dense());
}

#[test]
fn edge_factor_exact_on_random_sddm() {
    let m = gen::random_sddm(32, 60, 0.3, 12).unwrap();
    let b = edge_factor(&m).unwrap();
    assert!(b.max_column_nnz() <= 2);
    let bbt = DenseSym::gram(&b.to_dense_matrix(), 32, b.columns());
    assert!(bbt.sub(&m.to_dense()).max_abs() <= 1e-12 * m.max_abs());
}

#[test]
fn edge_based_dense_assembly_matches_application() {
    let m = gen::random_sddm(8, 10, 0.2, 3).unwrap();
    let op = build_factor(&m, &FactorConfig::default()).unwrap().into_edge_based(&m).unwrap();
    let b = edge_factor(&m).unwrap();
    let cols = b.columns();
    assert_eq!(op.input_dim(), cols);
    let z = dense_power(&m.to_dense(), -1.0).unwrap();
    // C̃ = Z B with Z applied through the inverse factor
    let c = op.to_dense_matrix();
    let zb_exact = mat_mul(z.as_slice(), &b.to_dense_matrix(), 8, 8, cols);
    for (g, w) in c.iter().zip(&zb_exact) {
        assert!((g - w).abs() <= 1e-5 * w.abs().max(1.0));
    }
    let u = random_vec(cols, 4);
    let v = random_vec(8, 5);
    let lhs = dot(&op.apply(&u).unwrap(), &v);
    let rhs = dot(&u, &op.apply_transpose(&v).unwrap());
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn edge_based_with_dense_certified_inverse() {
    let m = gen::random_sddm(12, 16, 0.2, 21).unwrap();
    let exact = dense_power(&m.to_dense(), -1.0).unwrap();
    // Z = M^{-1/2} S M^{-1/2} with S's spectrum in [e^{-ε}, e^{ε}]
    let eps = 0.05;
    let root = dense_power(&exact, 0.5).unwrap();
    let s = DenseSym::from_fn(12, |i, j| if i == j { (eps * ((i as f64) / 11.0 * 2.0 - 1.0)).exp() } else { 0.0 });
    let z = root.sandwich(&s);
    assert!(measured(&z, &exact) <= eps + 1e-12);
    let f = DenseFactor::power_of(&z.inverse().unwrap(), -1.0).unwrap();
    let op = EdgeBased {
        inverse: f,
        b: edge_factor(&m).unwrap(),
    };
    assert!(measured(&op.gram(), &exact) <= 2.0 * eps + 1e-10);
}

#[test]
fn refinement_on_grid() {
    let m = gen::grid2d(4, 0.1).unwrap();
    let crude = build_chain(&split(&m), -1.0, 1.0, &SparsifyParams::default()).unwrap();
    assert!(crude.eps_sum() <= 1.0);
    let r = refine_inverse_factor(&m, crude, 1e-6, None).unwrap();
    let err = measured(&r.gram(), &dense_power(&m.to_dense(), -1.0).unwrap());
    assert!(err <= 1e-6, "measured {err}");
}

#[test]
fn refinement_degree_is_logarithmic() {
    let m = gen::grid2d(4, 0.1).unwrap();
    let crude = build_chain(&split(&m), -1.0, 1.0, &SparsifyParams::default()).unwrap();
    let r = refine_inverse_factor(&m, crude, 1e-2, None).unwrap();
    let degrees: Vec<usize> = (2..=8).map(|k| r.with_eps(10f64.powi(-k)).poly.t).collect();
    for w in degrees.windows(2) {
        let step = w[1] as i64 - w[0] as i64;
        assert!((0..=4).contains(&step), "degrees {degrees:?}");
    }
}

#[test]
fn solve_cases() {
    let two = SparseSymMatrix::diagonal(&[2.0; 6]);
    let op = build_factor(&two, &FactorConfig::default()).unwrap();
    assert!(solve(&op, &[0.0; 6]).unwrap().iter().all(|&x| x == 0.0));
    for x in solve(&op, &[1.0; 6]).unwrap() {
        assert!((x - 0.5).abs() <= 0.5 * 0.1);
    }

    let m = gen::grid2d(10, 0.1).unwrap();
    let eps = 1e-6;
    let op = build_factor(&m, &FactorConfig { eps, ..Default::default() }).unwrap();
    let b = random_vec(100, 9);
    let x = solve(&op, &b).unwrap();
    let want = dense_power(&m.to_dense(), -1.0).unwrap().matvec(&b);
    let err: f64 = x.iter().zip(&want).map(|(a, w)| (a - w).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    assert!(err / norm <= 2.0 * eps, "relative error {}", err / norm);
    let r = m.mul_vec(&x).unwrap();
    let res: f64 = r.iter().zip(&b).map(|(a, w)| (a - w).powi(2)).sum::<f64>().sqrt();
    let kappa = op.chain().kappa_used;
    assert!(res / dot(&b, &b).sqrt() <= 2.0 * eps * kappa);
}

fn instance() -> impl Strategy<Value = SparseSymMatrix> {
    (4usize..24, 0usize..30, 0.05f64..0.5, any::<u64>())
        .prop_map(|(n, extra, slack, seed)| gen::random_sddm(n, extra, slack, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn chain_structure(m in instance(), seed in any::<u64>()) {
        let s = split(&m);
        let eps = 0.5;
        let sp = SparsifyParams { seed, ..Default::default() };
        let chain = build_chain(&s, -1.0, eps, &sp).unwrap();
        prop_assert!(chain.d() <= planned_length(s.kappa_bound, eps) + 1);
        let sum: f64 = chain.eps_schedule[..chain.d()].iter().sum();
        prop_assert!(sum <= eps);
        prop_assert!(chain.eps_sum() <= eps * (1.0 + 1e-12));
        for x in &chain.levels {
            prop_assert!(x.nnz() == 0 || x.min_value() >= 0.0);
        }
        for (i, r) in chain.reports.iter().enumerate() {
            prop_assert!(r.eps_measured.unwrap() <= chain.eps_schedule[i]);
        }
        let rho_d = spectral_radius(chain.levels.last().unwrap()).value;
        let last = DenseSym::identity(m.n()).sub(&chain.levels.last().unwrap().to_dense());
        prop_assert!(measured(&last, &DenseSym::identity(m.n())) <= chain.eps_schedule[chain.d()] + 1e-12);
        prop_assert!(rho_d < 1.0);
    }

    #[test]
    fn end_to_end_loewner_bound(m in instance(), pi in 0usize..4, seed in any::<u64>()) {
        let p = [-1.0, -0.5, 0.5, 1.0][pi];
        let s = split(&m);
        let sp = SparsifyParams { seed, ..Default::default() };
        let chain = build_chain(&s, p, 0.3, &sp).unwrap();
        let target = dense_power(&m.to_dense(), p).unwrap();
        let err = measured(&chain.gram(), &target);
        prop_assert!(err <= chain.error_bound(), "p {}: {} > {}", p, err, chain.error_bound());
    }

    #[test]
    fn adjoint_consistency(m in instance(), pi in 0usize..4, seed in any::<u64>()) {
        let p = [-1.0, -0.5, 0.5, 1.0][pi];
        let chain = build_chain(&split(&m), p, 0.5, &SparsifyParams::default()).unwrap();
        let u = random_vec(m.n(), seed);
        let v = random_vec(m.n(), seed ^ 1);
        let lhs = dot(&chain.apply(&u).unwrap(), &v);
        let rhs = dot(&u, &chain.apply_transpose(&v).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn edge_factor_reproduces_matrix(m in instance()) {
        let b = edge_factor(&m).unwrap();
        prop_assert!(b.max_column_nnz() <= 2);
        let bbt = DenseSym::gram(&b.to_dense_matrix(), m.n(), b.columns());
        prop_assert!(bbt.sub(&m.to_dense()).max_abs() <= 1e-12 * m.max_abs());
    }

    #[test]
    fn composite_is_positive_semidefinite(m in instance()) {
        let op = build_factor(&m, &FactorConfig::default()).unwrap();
        let g = op.gram();
        let ev = g.eigen().values;
        let top = ev.iter().cloned().fold(0.0f64, f64::max);
        prop_assert!(ev.iter().all(|&l| l >= -1e-12 * top));
    }
}
