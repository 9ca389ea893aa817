use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpg::graph::{sample_from_positions, ProbabilityMatrix};
use rdpg::spectral::procrustes_align;
use rdpg::testing::*;
use rdpg::{RdpgError, SeedStream};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn gaussian_kernel(a: &[f64], b: &[f64], h: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-d2 / (2.0 * h * h)).exp()
}

/// Direct evaluation of the unbiased estimator with explicit index loops.
fn mmd_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> f64 {
    let row = |m: &DMatrix<f64>, i: usize| m.row(i).iter().copied().collect::<Vec<f64>>();
    let (n, m) = (x.nrows(), y.nrows());
    let mut sxx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sxx += gaussian_kernel(&row(x, i), &row(x, j), h);
            }
        }
    }
    let mut syy = 0.0;
    for k in 0..m {
        for l in 0..m {
            if k != l {
                syy += gaussian_kernel(&row(y, k), &row(y, l), h);
            }
        }
    }
    let mut sxy = 0.0;
    for i in 0..n {
        for k in 0..m {
            sxy += gaussian_kernel(&row(x, i), &row(y, k), h);
        }
    }
    let (n, m) = (n as f64, m as f64);
    sxx / (n * (n - 1.0)) - 2.0 * sxy / (n * m) + syy / (m * (m - 1.0))
}

fn random_matrix(rng: &mut impl Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_rotation(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    random_matrix(rng, d, d).qr().q()
}

#[test]
fn mmd_ustat_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 2..=6 {
        for m in 2..=6 {
            let x = random_matrix(&mut rng, n, 2);
            let y = random_matrix(&mut rng, m, 2);
            let u = mmd_ustat(&x, &y, &KernelSpec::gaussian(0.8)).unwrap();
            assert!((u - mmd_oracle(&x, &y, 0.8)).abs() < 1e-12);
        }
    }
}

#[test]
fn median_heuristic_uses_pooled_median_distance() {
    // Pooled 1-d points 0, 1, 3: distances 1, 2, 3 with median 2.
    let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let y = DMatrix::from_column_slice(2, 1, &[3.0, 3.0]);
    let pooled = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
    assert_eq!(KernelSpec::default().resolve(&pooled).unwrap(), 2.0);
    // Pooled 0, 1, 3, 3: distances 1, 3, 3, 2, 2, 0 with median 2.
    let u = mmd_ustat(&x, &y, &KernelSpec::default()).unwrap();
    assert!((u - mmd_oracle(&x, &y, 2.0)).abs() < 1e-12);
    let same = DMatrix::from_element(3, 1, 1.0);
    assert_eq!(KernelSpec::default().resolve(&same).unwrap(), 1.0);
}

#[test]
fn mmd_input_errors() {
    let x = DMatrix::zeros(1, 2);
    let y = DMatrix::zeros(3, 2);
    assert!(matches!(mmd_ustat(&x, &y, &KernelSpec::default()), Err(RdpgError::TooFewPoints(1))));
    assert!(mmd_ustat(&y, &DMatrix::zeros(3, 1), &KernelSpec::default()).is_err());
    assert!(KernelSpec::gaussian(0.0).resolve(&y).is_err());
}

#[test]
fn linear_mmd_is_unbiased_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = KernelSpec::gaussian(1.0);
    let mut total = 0.0;
    let reps = 300;
    for _ in 0..reps {
        let x = random_matrix(&mut rng, 40, 2);
        let y = random_matrix(&mut rng, 40, 2).add_scalar(0.5);
        total += mmd_linear(&x, &y, &k).unwrap();
    }
    // Reference value from a large U-statistic.
    let x = random_matrix(&mut rng, 1500, 2);
    let y = random_matrix(&mut rng, 1500, 2).add_scalar(0.5);
    let reference = mmd_ustat(&x, &y, &k).unwrap();
    assert!((total / reps as f64 - reference).abs() < 0.01, "{} vs {reference}", total / reps as f64);
}

#[test]
fn permutation_test_is_reproducible_and_detects_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(&mut rng, 50, 2);
    let y = random_matrix(&mut rng, 50, 2).add_scalar(0.8);
    let k = KernelSpec::default();
    let a = mmd_permutation_test(&x, &y, &k, 200, 0.05, SeedStream::new(4)).unwrap();
    let b = mmd_permutation_test(&x, &y, &k, 200, 0.05, SeedStream::new(4)).unwrap();
    assert_eq!(a.p_value, b.p_value);
    assert_eq!(a.replicates, b.replicates);
    assert_eq!(a.n_replicates, 200);
    assert!(a.reject);
    assert_eq!(a.p_value, 0.5 / 200.0);
}

#[test]
fn continuity_correction_arithmetic() {
    let reps = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(continuity_p_value(10.0, &reps), 0.5 / 4.0);
    assert_eq!(continuity_p_value(0.25, &reps), 2.5 / 4.0);
    assert_eq!(continuity_p_value(0.2, &reps), 3.5 / 4.0);
    assert_eq!(continuity_p_value(0.0, &reps), 1.0);
}

#[test]
fn fisher_combination_matches_chi_squared_tail() {
    let cases: [&[f64]; 4] = [&[0.5], &[0.01, 0.2], &[0.3, 0.04, 0.9, 0.5], &[1e-6, 0.7, 0.2, 0.33, 0.05, 0.8]];
    for ps in cases {
        let (stat, p) = fisher_combine(ps).unwrap();
        let expected_stat: f64 = -2.0 * ps.iter().map(|p| p.ln()).sum::<f64>();
        assert!((stat - expected_stat).abs() < 1e-12);
        let chi = ChiSquared::new(2.0 * ps.len() as f64).unwrap();
        assert!((p - (1.0 - chi.cdf(stat))).abs() < 1e-10, "{p} vs {}", 1.0 - chi.cdf(stat));
    }
    assert!(matches!(fisher_combine(&[0.0]), Err(RdpgError::OutOfRangeP(_))));
    assert!(matches!(fisher_combine(&[]), Err(RdpgError::EmptyInput)));
}

#[test]
fn identity_numerator_vanishes_under_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 20, 3);
    let w = random_rotation(&mut rng, 3);
    assert!(semipar_numerator(&x, &(&x * &w), SemiparVariant::Identity).unwrap() < 1e-10);
}

#[test]
fn scaling_numerator_cancels_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_matrix(&mut rng, 20, 2);
    let y = &x * 0.7;
    assert!(semipar_numerator(&x, &y, SemiparVariant::Scaling).unwrap() < 1e-10);
    assert!(semipar_numerator(&x, &y, SemiparVariant::Identity).unwrap() > 0.1);
}

#[test]
fn diagonal_numerator_cancels_row_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_matrix(&mut rng, 20, 2);
    let mut y = x.clone();
    for mut row in y.row_iter_mut() {
        row *= rng.gen_range(0.2..3.0);
    }
    assert!(semipar_numerator(&x, &y, SemiparVariant::Diagonal).unwrap() < 1e-10);
    assert!(semipar_numerator(&x, &y, SemiparVariant::Scaling).unwrap() > 1e-3);
}

#[test]
fn semipar_statistics_match_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_matrix(&mut rng, 6, 2);
    let y = random_matrix(&mut rng, 6, 2);
    let (ga, gb) = (0.4, 0.7);
    let d = 2.0_f64;

    let raw = procrustes_align(&x, &y).unwrap().distance;
    let t = semipar_statistic(&x, &y, ga, gb, SemiparVariant::Identity).unwrap();
    assert!((t - raw / ((d / ga).sqrt() + (d / gb).sqrt())).abs() < 1e-12);

    let (fx, fy) = (x.norm(), y.norm());
    let scaled = procrustes_align(&(&x / fx), &(&y / fy)).unwrap().distance;
    let t = semipar_statistic(&x, &y, ga, gb, SemiparVariant::Scaling).unwrap();
    let denom = 2.0 * (d / ga).sqrt() / fx + 2.0 * (d / gb).sqrt() / fy;
    assert!((t - scaled / denom).abs() < 1e-12);

    let unit = |m: &DMatrix<f64>| DMatrix::from_fn(6, 2, |i, j| m[(i, j)] / m.row(i).norm());
    let min_norm = |m: &DMatrix<f64>| (0..6).map(|i| m.row(i).norm()).fold(f64::INFINITY, f64::min);
    let projected = procrustes_align(&unit(&x), &unit(&y)).unwrap().distance;
    let t = semipar_statistic(&x, &y, ga, gb, SemiparVariant::Diagonal).unwrap();
    let denom = 2.0 * (d / ga).sqrt() / min_norm(&x) + 2.0 * (d / gb).sqrt() / min_norm(&y);
    assert!((t - projected / denom).abs() < 1e-12);
}

#[test]
fn semipar_argument_errors() {
    let x = DMatrix::from_element(4, 2, 1.0);
    assert!(matches!(semipar_statistic(&x, &x, 0.0, 1.0, SemiparVariant::Identity), Err(RdpgError::NonPositiveGamma(_))));
    let mut z = x.clone();
    z.row_mut(2).fill(0.0);
    assert!(matches!(semipar_statistic(&z, &x, 1.0, 1.0, SemiparVariant::Diagonal), Err(RdpgError::ZeroRow(2))));
}

fn two_block_positions(n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.8]);
    let f = rdpg::MixtureSpec::from_block_matrix(&b, vec![0.5, 0.5]).unwrap();
    DMatrix::from_fn(n, 2, |i, j| f.atoms()[(i % 2, j)])
}

#[test]
fn bootstrap_report_shape_and_determinism() {
    let x = two_block_positions(60);
    let a = sample_from_positions(&x, SeedStream::new(9), false, true).unwrap();
    let b = sample_from_positions(&x, SeedStream::new(10), false, true).unwrap();
    let r1 = bootstrap_test(&a, &b, 2, 20, SemiparVariant::Identity, 0.05, SeedStream::new(11)).unwrap();
    let r2 = bootstrap_test(&a, &b, 2, 20, SemiparVariant::Identity, 0.05, SeedStream::new(11)).unwrap();
    assert_eq!(r1.p_value, r2.p_value);
    assert_eq!(r1.replicates, r2.replicates);
    assert_eq!(r1.n_replicates, 20);
    assert_eq!(r1.replicates.len(), 40);
    assert!(r1.p_value > 0.0 && r1.p_value <= 1.0);
    assert_eq!(r1.reject, r1.p_value <= 0.05);
}

#[test]
fn bootstrap_p_is_max_of_side_p_values() {
    let x = two_block_positions(60);
    let a = sample_from_positions(&x, SeedStream::new(12), false, true).unwrap();
    let b = sample_from_positions(&x, SeedStream::new(13), false, true).unwrap();
    let r = bootstrap_test(&a, &b, 2, 25, SemiparVariant::Scaling, 0.05, SeedStream::new(14)).unwrap();
    let (sx, sy) = r.replicates.split_at(25);
    let expected = continuity_p_value(r.statistic, sx).max(continuity_p_value(r.statistic, sy));
    assert_eq!(r.p_value, expected);
}

#[test]
fn identical_graphs_give_zero_paired_statistics() {
    let x = two_block_positions(50);
    let a = sample_from_positions(&x, SeedStream::new(15), false, true).unwrap();
    assert!(PairedStatistic::Omnibus.compute(&a, &a, 2).unwrap() < 1e-20);
    assert!(PairedStatistic::Procrustes.compute(&a, &a, 2).unwrap() < 1e-20);
}

#[test]
fn omnibus_test_with_supplied_null() {
    let x = two_block_positions(60);
    let p = ProbabilityMatrix::from_positions(&x).unwrap();
    let a = sample_from_positions(&x, SeedStream::new(16), false, true).unwrap();
    let b = sample_from_positions(&x, SeedStream::new(17), false, true).unwrap();
    let r = omnibus_test(&a, &b, 2, 50, &NullModel::Supplied(p.clone()), 0.05, SeedStream::new(18)).unwrap();
    assert_eq!(r.method, TestMethod::Omnibus);
    assert_eq!(r.n_replicates, 50);
    let null = paired_null(PairedStatistic::Omnibus, &p, 2, 50, SeedStream::new(18).named("null")).unwrap();
    assert_eq!(null, r.replicates);
    let est = omnibus_test(&a, &b, 2, 20, &NullModel::EstimateFromMean, 0.05, SeedStream::new(19)).unwrap();
    assert!(est.p_value > 0.0 && est.p_value <= 1.0);
}

#[test]
fn mmd_graph_test_accepts_different_sizes() {
    let a = sample_from_positions(&two_block_positions(60), SeedStream::new(20), false, true).unwrap();
    let b = sample_from_positions(&two_block_positions(80), SeedStream::new(21), false, true).unwrap();
    for v in [MmdVariant::Raw, MmdVariant::Scaled, MmdVariant::Projected] {
        let r = mmd_test(&a, &b, 2, v, 100, &KernelSpec::default(), 0.05, SeedStream::new(22)).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        assert_eq!(r.variant.as_deref(), Some(format!("{v:?}").as_str()));
    }
}

#[test]
fn report_serializes_without_replicates() {
    let reps = vec![0.1, 0.2];
    let r = mmd_permutation_test(
        &DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]),
        &DMatrix::from_column_slice(3, 1, &[0.5, 1.5, 2.5]),
        &KernelSpec::gaussian(1.0),
        reps.len(),
        0.05,
        SeedStream::new(1),
    )
    .unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert!(v.get("replicates").is_none());
    assert_eq!(v["n_replicates"], 2);
    assert_eq!(v["seed"], 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semipar_invariances(seed in 0u64..100_000, c in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 12, 2);
        let y = random_matrix(&mut rng, 12, 2);
        let w = random_rotation(&mut rng, 2);
        let diag: Vec<f64> = (0..12).map(|_| rng.gen_range(0.2..4.0)).collect();
        let dy = DMatrix::from_fn(12, 2, |i, j| y[(i, j)] * diag[i]);
        for v in [SemiparVariant::Identity, SemiparVariant::Scaling, SemiparVariant::Diagonal] {
            let base = semipar_numerator(&x, &y, v).unwrap();
            prop_assert!((semipar_numerator(&(&x * &w), &y, v).unwrap() - base).abs() < 1e-10);
            prop_assert!((semipar_numerator(&x, &(&y * &w), v).unwrap() - base).abs() < 1e-10);
            prop_assert!((semipar_numerator(&y, &x, v).unwrap() - base).abs() < 1e-10);
        }
        let s = semipar_numerator(&x, &y, SemiparVariant::Scaling).unwrap();
        prop_assert!((semipar_numerator(&x, &(&y * c), SemiparVariant::Scaling).unwrap() - s).abs() < 1e-10);
        let dgn = semipar_numerator(&x, &y, SemiparVariant::Diagonal).unwrap();
        prop_assert!((semipar_numerator(&x, &dy, SemiparVariant::Diagonal).unwrap() - dgn).abs() < 1e-10);
    }

    #[test]
    fn mmd_is_symmetric_and_rotation_invariant(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 7, 2);
        let y = random_matrix(&mut rng, 9, 2);
        let w = random_rotation(&mut rng, 2);
        let k = KernelSpec::default();
        let u = mmd_ustat(&x, &y, &k).unwrap();
        prop_assert!((mmd_ustat(&y, &x, &k).unwrap() - u).abs() < 1e-12);
        prop_assert!((mmd_ustat(&(&x * &w), &(&y * &w), &k).unwrap() - u).abs() < 1e-12);
    }

    #[test]
    fn p_values_in_unit_interval(t in -1.0f64..2.0, reps in prop::collection::vec(0.0f64..1.0, 1..50)) {
        let p = continuity_p_value(t, &reps);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn fisher_p_value_in_unit_interval(ps in prop::collection::vec(1e-12f64..=1.0, 1..20)) {
        let (stat, p) = fisher_combine(&ps).unwrap();
        prop_assert!(stat >= 0.0);
        prop_assert!(p > 0.0 && p <= 1.0);
    }
}
