use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpg::graph::*;
use rdpg::io::*;
use rdpg::model::{draw_positions, realize_model, DegreeFactor};
use rdpg::spectral::*;
use rdpg::{Graph, LatentPositionModel, MixtureSpec, ProbabilityMatrix, RdpgError, SeedStream};

fn random_sym(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a + a.transpose()
}

#[test]
fn sampled_graph_is_binary_symmetric_and_hollow() {
    let x = DMatrix::from_element(60, 1, 0.7);
    let g = sample_from_positions(&x, SeedStream::new(1), false, true).unwrap();
    let a = g.adjacency();
    assert_eq!(a, &a.transpose());
    assert!(a.iter().all(|&v| v == 0.0 || v == 1.0));
    assert!((0..60).all(|i| a[(i, i)] == 0.0));
    assert!(g.is_hollow() && !g.is_weighted() && !g.is_directed());
}

#[test]
fn edge_frequency_matches_probability() {
    // 500·499/2 Bernoulli(0.3) pairs: the density has sd ≈ 0.0013.
    let p = ProbabilityMatrix::new(DMatrix::from_element(500, 500, 0.3)).unwrap();
    let g = sample_adjacency(&p, SeedStream::new(2), false, true).unwrap();
    let pairs = 500.0 * 499.0 / 2.0;
    let density = g.edges().len() as f64 / pairs;
    assert!((density - 0.3).abs() < 0.006, "{density}");
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let x = DMatrix::from_element(40, 2, 0.5);
    let a = sample_from_positions(&x, SeedStream::new(3), false, true).unwrap();
    let b = sample_from_positions(&x, SeedStream::new(3), false, true).unwrap();
    let c = sample_from_positions(&x, SeedStream::new(4), false, true).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn directed_sampling_draws_both_directions() {
    let p = ProbabilityMatrix::new(DMatrix::from_element(80, 80, 0.5)).unwrap();
    let g = sample_adjacency(&p, SeedStream::new(5), true, true).unwrap();
    assert!(g.is_directed());
    assert_ne!(g.adjacency(), &g.adjacency().transpose());
}

#[test]
fn probability_matrix_rejects_out_of_range_entries() {
    let bad = DMatrix::from_row_slice(2, 2, &[0.5, 1.2, 1.2, 0.5]);
    assert!(matches!(ProbabilityMatrix::new(bad), Err(RdpgError::ProbabilityOutOfRange { .. })));
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.5]);
    assert!(matches!(sample_from_positions(&x, SeedStream::new(1), false, true), Err(RdpgError::InvalidModel(_))));
    let clipped = ProbabilityMatrix::clipped(DMatrix::from_row_slice(1, 2, &[-0.2, 1.5]));
    assert_eq!(clipped.matrix().as_slice(), &[0.0, 1.0]);
}

#[test]
fn graph_validation() {
    assert!(Graph::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), false).is_err());
    assert!(Graph::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]), false).is_err());
    assert!(Graph::new(DMatrix::zeros(2, 3), false).is_err());
    assert!(Graph::from_edges(3, &[(0, 3, 1.0)], false).is_err());
}

#[test]
fn components_and_induced_subgraphs() {
    let g = Graph::from_edges(6, &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)], false).unwrap();
    let mut comps = g.components();
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    assert_eq!(comps[0], vec![0, 1, 2]);
    assert_eq!(comps[1], vec![3, 4]);
    assert_eq!(comps[2], vec![5]);
    let sub = g.induced_subgraph(&[1, 2, 3]);
    assert_eq!(sub.n(), 3);
    assert_eq!(sub.edges(), vec![(0, 1, 1.0)]);
    assert_eq!(g.degrees(), vec![1.0, 2.0, 1.0, 1.0, 1.0, 0.0]);
}

#[test]
fn sparsity_stats_of_complete_graph() {
    // K_n has eigenvalues n − 1 and −1 (multiplicity n − 1), row sums n − 1.
    let n = 10;
    let k = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    let s = sparsity_stats(&k, 1).unwrap();
    assert_eq!(s.delta, 9.0);
    assert!((s.gamma - 8.0 / 9.0).abs() < 1e-12);
    assert!(matches!(sparsity_stats(&DMatrix::zeros(4, 4), 1), Err(RdpgError::DivisionByZeroDelta)));
}

#[test]
fn diagonal_augmentation_uses_scaled_degrees() {
    let g = Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], false).unwrap();
    let aug = augment_diagonal(&g).unwrap();
    assert!((aug.adjacency()[(0, 0)] - 3.0 / 5.0).abs() < 1e-15);
    assert!((aug.adjacency()[(1, 1)] - 1.0 / 5.0).abs() < 1e-15);
}

#[test]
fn block_model_probabilities_follow_labels() {
    let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.4]);
    let f = MixtureSpec::from_block_matrix(&b, vec![0.5, 0.5]).unwrap();
    assert!((f.block_matrix() - &b).amax() < 1e-12);
    let r = realize_model(&LatentPositionModel::PointMass { mixture: f }, 50, SeedStream::new(6)).unwrap();
    let labels = r.labels.unwrap();
    for i in 0..50 {
        for j in 0..50 {
            assert!((r.probabilities.matrix()[(i, j)] - b[(labels[i], labels[j])]).abs() < 1e-12);
        }
    }
}

#[test]
fn degree_corrected_positions_scale_unit_atoms() {
    let atoms = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let f = MixtureSpec::new(vec![0.5, 0.5], atoms).unwrap();
    let m = LatentPositionModel::DegreeCorrected { mixture: f, degree: DegreeFactor::default() };
    let draw = draw_positions(&m, 100, SeedStream::new(7)).unwrap();
    let theta = draw.degree_factors.unwrap();
    for (i, row) in draw.positions.row_iter().enumerate() {
        assert!((row.norm() - theta[i]).abs() < 1e-12);
        assert!((0.2..=1.0).contains(&theta[i]));
    }
}

#[test]
fn mixed_membership_rows_lie_in_corner_hull() {
    let corners = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.1, 0.9, 0.5, 0.5]);
    let m = LatentPositionModel::MixedMembership { alpha: vec![1.0, 1.0, 1.0], corners };
    let x = draw_positions(&m, 200, SeedStream::new(8)).unwrap().positions;
    let p = &x * x.transpose();
    assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(x.iter().all(|&v| (0.1 - 1e-12..=0.9 + 1e-12).contains(&v)));
}

#[test]
fn dirichlet_rows_sum_to_one() {
    let m = LatentPositionModel::Dirichlet { alpha: vec![1.0, 2.0, 3.0] };
    let x = draw_positions(&m, 300, SeedStream::new(9)).unwrap().positions;
    for row in x.row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let mean2 = x.column(2).mean();
    assert!((mean2 - 0.5).abs() < 0.05, "{mean2}");
}

#[test]
fn invalid_models_rejected() {
    let m = LatentPositionModel::Dirichlet { alpha: vec![1.0] };
    assert!(matches!(draw_positions(&m, 5, SeedStream::new(1)), Err(RdpgError::InvalidModel(_))));
    assert!(MixtureSpec::new(vec![0.5, 0.6], DMatrix::from_element(2, 1, 0.5)).is_err());
}

#[test]
fn top_eigenpairs_match_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for &n in &[20, 150] {
        let h = random_sym(&mut rng, n);
        let pairs = sym_eigen_topk(&h, 4).unwrap();
        let mut all: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        all.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        for k in 0..4 {
            assert!((pairs.values[k] - all[k]).abs() < 1e-8, "n={n} k={k}");
            let v = pairs.vectors.column(k);
            assert!((&h * v - v * pairs.values[k]).norm() < 1e-6);
        }
    }
}

#[test]
fn truncated_svd_matches_dense_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = DMatrix::from_fn(120, 120, |_, _| rng.gen_range(0.0..1.0));
    let svd = svd_topk(&m, 3).unwrap();
    let dense = m.clone().singular_values();
    for k in 0..3 {
        assert!((svd.singular_values[k] - dense[k]).abs() < 1e-8);
    }
    let approx = &svd.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.singular_values.clone())) * svd.v.transpose();
    let rank3 = {
        let full = m.clone().svd(true, true);
        let mut s = full.singular_values.clone();
        for k in 3..s.len() {
            s[k] = 0.0;
        }
        full.u.unwrap() * DMatrix::from_diagonal(&s) * full.v_t.unwrap()
    };
    assert!((approx - rank3).amax() < 1e-8);
}

#[test]
fn procrustes_recovers_known_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-1.0..1.0));
    let q = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let res = procrustes_align(&x, &(&x * &q)).unwrap();
    assert!((res.rotation - q).amax() < 1e-10);
    assert!(res.distance < 1e-10);
}

#[test]
fn two_to_infinity_is_max_row_norm() {
    let m = DMatrix::from_row_slice(3, 2, &[3.0, 4.0, 1.0, 1.0, 0.0, -6.0]);
    assert_eq!(two_to_infinity(&m), 6.0);
}

#[test]
fn edge_list_round_trip_keeps_isolated_vertices() {
    let g = Graph::from_edges(5, &[(0, 1, 1.0), (1, 2, 1.0)], false).unwrap();
    let mut buf = Vec::new();
    write_edge_list(&g, &mut buf).unwrap();
    let back = read_edge_list(buf.as_slice(), None).unwrap();
    assert_eq!(back, g);

    let d = Graph::from_edges(3, &[(0, 1, 2.5), (2, 0, 1.0)], true).unwrap();
    let mut buf = Vec::new();
    write_edge_list(&d, &mut buf).unwrap();
    assert_eq!(read_edge_list(buf.as_slice(), None).unwrap(), d);
}

#[test]
fn edge_list_without_header_and_with_comments() {
    let text = "# a comment\n0\t1\n2\t1\n\n";
    let g = read_edge_list(text.as_bytes(), None).unwrap();
    assert_eq!(g.n(), 3);
    assert!(!g.is_directed());
    assert_eq!(g.adjacency()[(1, 2)], 1.0);
    assert!(matches!(read_edge_list("0\tx\n".as_bytes(), None), Err(RdpgError::Parse(_))));
}

#[test]
fn matrix_csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1e3..1e3));
    let mut buf = Vec::new();
    write_matrix_csv(&m, &mut buf).unwrap();
    assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_never_exceeds_one(seed in 0u64..100_000, n in 3usize..25, d in 1usize..3) {
        prop_assume!(d < n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
        let h = &a + a.transpose();
        let s = sparsity_stats(&h, d).unwrap();
        prop_assert!(s.gamma <= 1.0 + 1e-12, "gamma {}", s.gamma);
        prop_assert!(s.gamma >= 0.0);
    }

    #[test]
    fn substreams_are_distinct(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        let s = SeedStream::new(seed);
        prop_assert_ne!(s.substream(a).seed(), s.substream(b).seed());
        prop_assert_eq!(s.substream(a), s.substream(a));
    }

    #[test]
    fn procrustes_distance_is_rotation_invariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(15, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(15, 2, |_, _| rng.gen_range(-1.0..1.0));
        let q = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let d0 = procrustes_align(&x, &y).unwrap().distance;
        let d1 = procrustes_align(&(&x * &q), &y).unwrap().distance;
        prop_assert!((d0 - d1).abs() < 1e-10);
        prop_assert!(d0 <= (&x - &y).norm() + 1e-12);
    }
}
