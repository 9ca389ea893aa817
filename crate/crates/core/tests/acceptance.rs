//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rdpg::cluster::*;
use rdpg::embedding::{embed_symmetric, lse_matrix, EmbeddingKind};
use rdpg::experiments::*;
use rdpg::graph::{sample_from_positions, sparsity_stats};
use rdpg::limits::*;
use rdpg::model::{draw_positions, two_block_example};
use rdpg::spectral::procrustes_align;
use rdpg::testing::*;
use rdpg::{LatentPositionModel, MixtureSpec, SeedStream};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn check(ok: &mut bool, cond: bool, msg: &mut Vec<String>, label: String) {
    if !cond {
        *ok = false;
    }
    msg.push(format!("{label}{}", if cond { "" } else { " [miss]" }));
}

fn sbm(b: &[f64], weights: Vec<f64>) -> MixtureSpec {
    let k = weights.len();
    MixtureSpec::from_block_matrix(&DMatrix::from_row_slice(k, k, b), weights).unwrap()
}

fn clt_covariance() -> Outcome {
    let published = [[0.59, 0.55], [0.55, 13.07]];
    let rep = experiment_clt(&two_block_example(), &[8000], 50, SeedStream::new(1)).unwrap();
    let e = &rep.rows[0].blocks[0].empirical;
    let mut ok = true;
    let mut msg = Vec::new();
    for i in 0..2 {
        let rel = (e[i][i] - published[i][i]).abs() / published[i][i];
        check(&mut ok, rel <= 0.20, &mut msg, format!("S{i}{i}={:.3} rel.err {:.3}", e[i][i], rel));
    }
    let off = (e[0][1] - published[0][1]).abs();
    check(&mut ok, off <= 0.5, &mut msg, format!("S01={:.3} abs.err {:.3}", e[0][1], off));
    outcome(ok, msg.join(", "))
}

fn er_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 1..=9 {
        let p = i as f64 / 10.0;
        let f = MixtureSpec::new(vec![1.0], DMatrix::from_element(1, 1, p)).unwrap();
        let x = DVector::from_element(1, p);
        let a = ase_limit_covariance(&f, &x).unwrap()[(0, 0)];
        let l = lse_limit_covariance(&f, &x).unwrap()[(0, 0)];
        worst = worst.max((a - (1.0 - p * p)).abs());
        worst = worst.max((l - (1.0 - p * p) / (4.0 * p * p)).abs());
    }
    outcome(worst <= 1e-12, format!("max abs error {worst:.2e}"))
}

fn two_to_infinity_trend() -> Outcome {
    let model = LatentPositionModel::PointMass { mixture: two_block_example() };
    let ns = [250, 500, 1000, 2000];
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| median(&two_to_infinity_errors(&model, n, 20, SeedStream::new(n as u64)).unwrap()))
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let halved = medians[3] < 0.5 * medians[0];
    let shown: Vec<String> = ns.iter().zip(&medians).map(|(n, m)| format!("n={n}: {m:.4}")).collect();
    outcome(decreasing && halved, format!("{} (decreasing {decreasing}, halved {halved})", shown.join(", ")))
}

fn random_pd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.05
}

fn grid_chernoff(mu0: &DVector<f64>, s0: &DMatrix<f64>, mu1: &DVector<f64>, s1: &DMatrix<f64>, points: usize) -> f64 {
    let diff = mu1 - mu0;
    let (d0, d1) = (s0.determinant(), s1.determinant());
    (1..points)
        .map(|i| {
            let t = i as f64 / points as f64;
            let st = s0 * t + s1 * (1.0 - t);
            let quad = diff.dot(&(st.clone().try_inverse().unwrap() * &diff));
            0.5 * t * (1.0 - t) * quad + 0.5 * (st.determinant().ln() - t * d0.ln() - (1.0 - t) * d1.ln())
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn rho_a_closed_form(p: f64, q: f64, pi1: f64, n: f64) -> f64 {
    let pi2 = 1.0 - pi1;
    let num = n * (p - q).powi(2) * (pi1 * p * p + pi2 * q * q).powi(2);
    let a = (pi1 * p.powi(4) * (1.0 - p * p) + pi2 * p * q.powi(3) * (1.0 - p * q)).sqrt();
    let b = (pi1 * p.powi(3) * q * (1.0 - p * q) + pi2 * q.powi(4) * (1.0 - q * q)).sqrt();
    num / (2.0 * (a + b).powi(2))
}

fn chernoff_machinery() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.gen_range(1..=4);
        let s0 = random_pd(&mut rng, d);
        let s1 = random_pd(&mut rng, d);
        let mu0 = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
        let mu1 = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
        let c = chernoff_gaussians(&mu0, &s0, &mu1, &s1).unwrap().c;
        worst = worst.max((c - grid_chernoff(&mu0, &s0, &mu1, &s1, 100_000)).abs());
    }
    check(&mut ok, worst <= 1e-6, &mut msg, format!("grid gap {worst:.2e}"));

    let mut eq_worst: f64 = 0.0;
    for _ in 0..20 {
        let s = random_pd(&mut rng, 3);
        let mu0 = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let mu1 = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let r = chernoff_gaussians(&mu0, &s, &mu1, &s).unwrap();
        let diff = &mu1 - &mu0;
        let m2 = diff.dot(&(s.clone().try_inverse().unwrap() * &diff));
        eq_worst = eq_worst.max((r.c - m2 / 8.0).abs()).max((r.t_star - 0.5).abs());
    }
    check(&mut ok, eq_worst <= 1e-8, &mut msg, format!("equal-cov error {eq_worst:.2e}"));

    let mut rho_worst: f64 = 0.0;
    for &(p, q) in &[(0.5, 0.3), (0.3, 0.2), (0.7, 0.75), (0.6, 0.45)] {
        let f = MixtureSpec::new(vec![0.6, 0.4], DMatrix::from_column_slice(2, 1, &[p, q])).unwrap();
        let r = rho_pair(&f, 1e4).unwrap().rho_a;
        let closed = rho_a_closed_form(p, q, 0.6, 1e4);
        rho_worst = rho_worst.max((r - closed).abs() / closed);
    }
    check(&mut ok, rho_worst <= 0.02, &mut msg, format!("rho_A rel.err {rho_worst:.4}"));

    let fam = SurfaceFamily::TwoBlockRank1 { weights: [0.6, 0.4] };
    let cells = ratio_surface(&fam, &linspace(0.1, 0.9, 17), &linspace(-0.3, 0.3, 25), 1e4);
    let below = cells.iter().filter(|c| c.ratio.is_some_and(|r| r < 1.0)).count();
    let above = cells.iter().filter(|c| c.ratio.is_some_and(|r| r > 1.0)).count();
    check(&mut ok, below > 0 && above > 0, &mut msg, format!("surface cells <1: {below}, >1: {above}"));
    outcome(ok, msg.join(", "))
}

fn bootstrap_model() -> LatentPositionModel {
    LatentPositionModel::PointMass { mixture: sbm(&[0.8, 0.1, 0.1, 0.8], vec![0.5, 0.5]) }
}

fn semipar_bootstrap() -> Outcome {
    let model = bootstrap_model();
    let s = SeedStream::new(5);
    let x = draw_positions(&model, 100, s.named("X")).unwrap().positions;
    let runs = 200;
    let rate = |alt: bool| {
        let mut rejections = 0;
        for r in 0..runs {
            let rs = s.substream(r as u64).named(if alt { "alt" } else { "null" });
            let y = if alt { replace_rows(&model, &x, 50, rs.named("Y")).unwrap() } else { x.clone() };
            let a = sample_from_positions(&x, rs.named("A"), false, true).unwrap();
            let b = sample_from_positions(&y, rs.named("B"), false, true).unwrap();
            let rep = bootstrap_test(&a, &b, 2, 200, SemiparVariant::Identity, 0.05, rs.named("bootstrap")).unwrap();
            rejections += usize::from(rep.reject);
        }
        rejections as f64 / runs as f64
    };
    let level = rate(false);
    let power = rate(true);
    let ok = (0.01..=0.12).contains(&level) && power >= 0.9;
    outcome(ok, format!("level {level:.3} (need [0.01, 0.12]), power {power:.3} (need >= 0.9)"))
}

fn omnibus_testing() -> Outcome {
    let dirichlet = LatentPositionModel::Dirichlet { alpha: vec![1.0, 1.0, 1.0] };
    let power = paired_power(&dirichlet, 100, 5, 10, 40, 500, 0.05, SeedStream::new(6)).unwrap();
    let power_ok = power.omnibus >= power.procrustes - 0.05;
    let trials = omnibus_mse(&dirichlet, 200, 50, SeedStream::new(7)).unwrap();
    let abar = mean(&trials.iter().map(|t| t.abar).collect::<Vec<_>>());
    let omnibar = mean(&trials.iter().map(|t| t.omnibar).collect::<Vec<_>>());
    let mse_ok = omnibar <= 1.3 * abar;
    outcome(
        power_ok && mse_ok,
        format!(
            "power omnibus {:.3} vs procrustes {:.3} over {} pairs; MSE OMNIbar {omnibar:.5} vs Abar {abar:.5} (ratio {:.3})",
            power.omnibus,
            power.procrustes,
            power.trials,
            omnibar / abar
        ),
    )
}

fn mmd_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> f64 {
    let k = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| (-(a.row(i) - b.row(j)).norm_squared() / (2.0 * h * h)).exp();
    let (n, m) = (x.nrows(), y.nrows());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += k(x, i, x, j) / (n * (n - 1)) as f64;
            }
        }
        for l in 0..m {
            total -= 2.0 * k(x, i, y, l) / (n * m) as f64;
        }
    }
    for a in 0..m {
        for b in 0..m {
            if a != b {
                total += k(y, a, y, b) / (m * (m - 1)) as f64;
            }
        }
    }
    total
}

fn normal_sample(rng: &mut impl Rng, n: usize, shift: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |_, j| {
        let z: f64 = StandardNormal.sample(rng);
        if j == 0 { z + shift } else { z }
    })
}

fn mmd_suite() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        for m in 2..=6 {
            let x = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
            let y = DMatrix::from_fn(m, 3, |_, _| rng.gen_range(-1.0..1.0));
            let u = mmd_ustat(&x, &y, &KernelSpec::gaussian(0.7)).unwrap();
            worst = worst.max((u - mmd_oracle(&x, &y, 0.7)).abs());
        }
    }
    check(&mut ok, worst <= 1e-12, &mut msg, format!("oracle gap {worst:.2e}"));
    let runs = 200;
    let rate = |shift: f64, tag: &str| {
        let mut rejections = 0;
        for r in 0..runs {
            let s = SeedStream::new(9).named(tag).substream(r);
            let mut g = s.named("data").rng();
            let x = normal_sample(&mut g, 150, 0.0);
            let y = normal_sample(&mut g, 150, shift);
            let rep = mmd_permutation_test(&x, &y, &KernelSpec::default(), 500, 0.05, s.named("perm")).unwrap();
            rejections += usize::from(rep.reject);
        }
        rejections as f64 / runs as f64
    };
    let level = rate(0.0, "null");
    check(&mut ok, (0.02..=0.10).contains(&level), &mut msg, format!("level {level:.3}"));
    let power = rate(0.5, "shift");
    check(&mut ok, power >= 0.9, &mut msg, format!("power at mean shift 0.5: {power:.3}"));
    outcome(ok, msg.join(", "))
}

fn motif_ari(trial: u64) -> f64 {
    let pa = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.3, 0.5]);
    let pb = DMatrix::from_row_slice(2, 2, &[0.6, 0.35, 0.35, 0.4]);
    let s = SeedStream::new(11).substream(trial);
    let planted = planted_hsbm(&[pa, pb], &[0, 0, 1], &[100, 100], 0.05, s.named("graph")).unwrap();
    let cfg = HsbmConfig::new(6, 2, 20, KSelector::Fixed(3));
    let tree = hsbm_decompose(&planted.graph, &cfg, s.named("hsbm")).unwrap();
    let root = &tree.root;
    let found: Vec<usize> = root
        .child_labels()
        .iter()
        .map(|&c| root.motifs.get(c).copied().flatten().map_or(usize::MAX, |m| m))
        .collect();
    let truth: Vec<usize> = root.vertices.iter().map(|&v| planted.motifs[planted.super_labels[v]]).collect();
    adjusted_rand_index(&found, &truth)
}

fn clustering_suite() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let mixture = two_block_example();
    let (mut km, mut gm) = (Vec::new(), Vec::new());
    for t in 0..50 {
        let (a, b) = classification_trial(&mixture, 2000, SeedStream::new(10).substream(t)).unwrap();
        km.push(a);
        gm.push(b);
    }
    let (km, gm) = (mean(&km), mean(&gm));
    check(&mut ok, gm <= km, &mut msg, format!("misclassification GMM {gm:.4} vs k-means {km:.4}"));
    let aris: Vec<f64> = (0..20).map(motif_ari).collect();
    let mean_ari = mean(&aris);
    let min_ari = aris.iter().copied().fold(f64::INFINITY, f64::min);
    check(&mut ok, mean_ari >= 0.9, &mut msg, format!("HSBM motif ARI mean {mean_ari:.3} (min {min_ari:.3}) over 20 trials"));
    outcome(ok, msg.join(", "))
}

fn exactness_suite() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);

    let mut worst: f64 = 0.0;
    for &(n, d) in &[(50, 1), (100, 2), (200, 3)] {
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.05..1.0) / (d as f64).sqrt());
        let p = &x * x.transpose();
        let ase = embed_symmetric(&p, d, EmbeddingKind::Ase).unwrap().coords;
        worst = worst.max(procrustes_align(&ase, &x).unwrap().distance);
        let mut scaled = x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row /= p.row(i).sum().sqrt();
        }
        let lse = lse_matrix(&p, d).unwrap().coords;
        worst = worst.max(procrustes_align(&lse, &scaled).unwrap().distance);
    }
    check(&mut ok, worst <= 1e-8, &mut msg, format!("noiseless residual {worst:.2e}"));

    let mut inv: f64 = 0.0;
    for _ in 0..100 {
        let x = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-1.0..1.0));
        let w = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let (ga, gb) = (rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0));
        for v in [SemiparVariant::Identity, SemiparVariant::Scaling, SemiparVariant::Diagonal] {
            let base = semipar_statistic(&x, &y, ga, gb, v).unwrap();
            inv = inv.max((semipar_statistic(&(&x * &w), &y, ga, gb, v).unwrap() - base).abs());
            inv = inv.max((semipar_statistic(&x, &(&y * &w), ga, gb, v).unwrap() - base).abs());
            inv = inv.max(semipar_numerator(&x, &(&x * &w), v).unwrap());
        }
        let c = rng.gen_range(0.1..5.0);
        inv = inv.max(semipar_numerator(&x, &(&x * &w * c), SemiparVariant::Scaling).unwrap());
        let mut dx = &x * &w;
        for mut row in dx.row_iter_mut() {
            row *= rng.gen_range(0.1..5.0);
        }
        inv = inv.max(semipar_numerator(&x, &dx, SemiparVariant::Diagonal).unwrap());
    }
    check(&mut ok, inv <= 1e-10, &mut msg, format!("invariance error {inv:.2e}"));

    let mut max_gamma = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(3..30);
        let d = rng.gen_range(1..n.min(5));
        let a = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.5) { rng.gen_range(0.0..2.0) } else { 0.0 });
        let h = &a + a.transpose();
        if let Ok(s) = sparsity_stats(&h, d) {
            max_gamma = max_gamma.max(s.gamma);
        }
    }
    check(&mut ok, max_gamma <= 1.0, &mut msg, format!("max gamma {max_gamma:.4} over 1000 matrices"));
    outcome(ok, msg.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("CLT covariance reproduction", clt_covariance),
        ("ER closed forms", er_closed_forms),
        ("2->inf consistency trend", two_to_infinity_trend),
        ("Chernoff machinery", chernoff_machinery),
        ("semiparametric bootstrap", semipar_bootstrap),
        ("omnibus testing and estimation", omnibus_testing),
        ("MMD", mmd_suite),
        ("clustering", clustering_suite),
        ("exactness suite", exactness_suite),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!out.pass);
        println!("{status} criterion {}: {name}: {} ({:.1}s)", i + 1, out.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
