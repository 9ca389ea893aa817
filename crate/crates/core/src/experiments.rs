//! Monte Carlo experiments: CLT covariance reproduction, 2→∞ error decay,
//! joint-embedding MSE, two-sample power with a known null, classification
//! error of k-means against GMM, and planted hierarchical SBMs.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{gmm_em, kmeans, misclassification_rate, CovarianceClass};
use crate::embedding::{embed_symmetric, omni_embed, EmbeddingKind};
use crate::error::{RdpgError, Result};
use crate::graph::{sample_adjacency, sample_from_positions, Graph, ProbabilityMatrix};
use crate::limits::ase_limit_covariance;
use crate::model::{draw_positions, LatentPositionModel, MixtureSpec};
use crate::rng::SeedStream;
use crate::spectral::{procrustes_align, two_to_infinity};
use crate::testing::{continuity_p_value, paired_null, PairedStatistic};

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(RdpgError::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCovariance {
    pub block: usize,
    /// Residual rows pooled over all trials.
    pub count: usize,
    pub empirical: Vec<Vec<f64>>,
    pub theoretical: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub n: usize,
    pub trials: usize,
    pub blocks: Vec<BlockCovariance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub seed: u64,
    pub rows: Vec<CltRow>,
}

/// Per-block sample covariance of √n·(X̂W − X), where W aligns the ASE to the
/// true positions, alongside the limiting Σ(ν_k).
pub fn experiment_clt(mixture: &MixtureSpec, ns: &[usize], trials: usize, stream: SeedStream) -> Result<CltReport> {
    check_trials(trials)?;
    if ns.is_empty() {
        return Err(RdpgError::InvalidArgument("need at least one n".into()));
    }
    let d = mixture.dim();
    let k = mixture.k();
    let theory = (0..k).map(|b| ase_limit_covariance(mixture, &mixture.atom(b))).collect::<Result<Vec<_>>>()?;
    let model = LatentPositionModel::PointMass { mixture: mixture.clone() };
    let mut rows = Vec::with_capacity(ns.len());
    for (ni, &n) in ns.iter().enumerate() {
        let mut sums = vec![DMatrix::<f64>::zeros(d, 1); k];
        let mut outer = vec![DMatrix::<f64>::zeros(d, d); k];
        let mut counts = vec![0usize; k];
        // sequential: each trial holds an n×n adjacency matrix
        for t in 0..trials {
            let s = stream.substream(ni as u64).substream(t as u64);
            let draw = draw_positions(&model, n, s.named("positions"))?;
            let g = sample_from_positions(&draw.positions, s.named("graph"), false, true)?;
            let xhat = embed_symmetric(g.adjacency(), d, EmbeddingKind::Ase)?.coords;
            drop(g);
            let w = procrustes_align(&xhat, &draw.positions)?.rotation;
            let resid = (xhat * w - &draw.positions) * (n as f64).sqrt();
            let labels = draw.labels.expect("point-mass draws carry labels");
            for (i, &b) in labels.iter().enumerate() {
                let r = resid.row(i).transpose();
                sums[b] += &r;
                outer[b] += &r * r.transpose();
                counts[b] += 1;
            }
        }
        let blocks = (0..k)
            .map(|b| {
                let c = counts[b] as f64;
                let emp = if counts[b] > 1 {
                    (&outer[b] - &sums[b] * sums[b].transpose() / c) / (c - 1.0)
                } else {
                    DMatrix::from_element(d, d, f64::NAN)
                };
                BlockCovariance {
                    block: b,
                    count: counts[b],
                    empirical: matrix_rows(&emp),
                    theoretical: matrix_rows(&theory[b]),
                }
            })
            .collect();
        rows.push(CltRow { n, trials, blocks });
    }
    Ok(CltReport { seed: stream.seed(), rows })
}

/// Max row error ‖X̂W − X‖_{2→∞} after Procrustes alignment, one value per trial.
pub fn two_to_infinity_errors(model: &LatentPositionModel, n: usize, trials: usize, stream: SeedStream) -> Result<Vec<f64>> {
    check_trials(trials)?;
    let d = model.dim();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = stream.substream(t as u64);
            let draw = draw_positions(model, n, s.named("positions"))?;
            let g = sample_from_positions(&draw.positions, s.named("graph"), false, true)?;
            let xhat = embed_symmetric(g.adjacency(), d, EmbeddingKind::Ase)?.coords;
            let w = procrustes_align(&xhat, &draw.positions)?.rotation;
            Ok(two_to_infinity(&(xhat * w - &draw.positions)))
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean squared row error of each estimator against the true positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseTrial {
    /// ASE of the first graph.
    pub ase1: f64,
    /// ASE of the mean adjacency matrix.
    pub abar: f64,
    /// First block of the omnibus embedding.
    pub omni: f64,
    /// Mean of the omnibus blocks.
    pub omnibar: f64,
    /// Mean of the two ASEs after aligning the second to the first.
    pub procbar: f64,
}

fn aligned_mse(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    let fit = procrustes_align(est, truth)?;
    Ok(fit.distance.powi(2) / truth.nrows() as f64)
}

/// One trial of the two-graph estimation comparison on shared latent positions.
pub fn omnibus_mse_trial(model: &LatentPositionModel, n: usize, stream: SeedStream) -> Result<MseTrial> {
    let d = model.dim();
    let draw = draw_positions(model, n, stream.named("positions"))?;
    let x = &draw.positions;
    let a1 = sample_from_positions(x, stream.named("A1"), false, true)?;
    let a2 = sample_from_positions(x, stream.named("A2"), false, true)?;
    let x1 = embed_symmetric(a1.adjacency(), d, EmbeddingKind::Ase)?.coords;
    let x2 = embed_symmetric(a2.adjacency(), d, EmbeddingKind::Ase)?.coords;
    let mean_adj = (a1.adjacency() + a2.adjacency()) * 0.5;
    let xbar = embed_symmetric(&mean_adj, d, EmbeddingKind::Ase)?.coords;
    let z = omni_embed(&[a1, a2], d)?;
    let z1 = z.omnibus_block(0).expect("omnibus has two blocks");
    let z2 = z.omnibus_block(1).expect("omnibus has two blocks");
    let w = procrustes_align(&x2, &x1)?.rotation;
    let procbar = (&x1 + x2 * w) * 0.5;
    Ok(MseTrial {
        ase1: aligned_mse(&x1, x)?,
        abar: aligned_mse(&xbar, x)?,
        omni: aligned_mse(&z1, x)?,
        omnibar: aligned_mse(&((&z1 + &z2) * 0.5), x)?,
        procbar: aligned_mse(&procbar, x)?,
    })
}

pub fn omnibus_mse(model: &LatentPositionModel, n: usize, trials: usize, stream: SeedStream) -> Result<Vec<MseTrial>> {
    check_trials(trials)?;
    (0..trials).into_par_iter().map(|t| omnibus_mse_trial(model, n, stream.substream(t as u64))).collect()
}

/// Positions with `k` uniformly chosen rows replaced by fresh draws from the model.
pub fn replace_rows(model: &LatentPositionModel, x: &DMatrix<f64>, k: usize, stream: SeedStream) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if k > n {
        return Err(RdpgError::InvalidArgument(format!("cannot replace {k} of {n} rows")));
    }
    let fresh = draw_positions(model, n, stream.named("fresh"))?.positions;
    let mut y = x.clone();
    for i in sample_indices(&mut stream.named("rows").rng(), n, k) {
        y.set_row(i, &fresh.row(i));
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub omnibus: f64,
    pub procrustes: f64,
    pub trials: usize,
}

/// Rejection rates of the omnibus and Procrustes tests for graphs whose
/// latent positions differ in `k` rows, with the null simulated from the
/// known P = XXᵀ. Each of `x_draws` position draws is reused for
/// `trials_per_x` alternative pairs.
#[allow(clippy::too_many_arguments)]
pub fn paired_power(model: &LatentPositionModel, n: usize, k: usize, x_draws: usize, trials_per_x: usize, mc: usize, alpha: f64, stream: SeedStream) -> Result<PowerReport> {
    check_trials(x_draws * trials_per_x)?;
    let d = model.dim();
    let stats = [PairedStatistic::Omnibus, PairedStatistic::Procrustes];
    let mut rejections = [0usize; 2];
    for xi in 0..x_draws {
        let s = stream.substream(xi as u64);
        let x = draw_positions(model, n, s.named("X"))?.positions;
        let p = ProbabilityMatrix::from_positions(&x)?;
        let nulls = stats.iter().map(|&st| paired_null(st, &p, d, mc, s.named("null"))).collect::<Result<Vec<_>>>()?;
        let outcomes: Vec<[bool; 2]> = (0..trials_per_x)
            .into_par_iter()
            .map(|t| {
                let ts = s.substream(t as u64);
                let y = replace_rows(model, &x, k, ts.named("Y"))?;
                let a = sample_adjacency(&p, ts.named("A"), false, true)?;
                let b = sample_from_positions(&y, ts.named("B"), false, true)?;
                let mut out = [false; 2];
                for (j, &st) in stats.iter().enumerate() {
                    out[j] = continuity_p_value(st.compute(&a, &b, d)?, &nulls[j]) <= alpha;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for o in outcomes {
            for j in 0..2 {
                rejections[j] += usize::from(o[j]);
            }
        }
    }
    let total = (x_draws * trials_per_x) as f64;
    Ok(PowerReport {
        omnibus: rejections[0] as f64 / total,
        procrustes: rejections[1] as f64 / total,
        trials: x_draws * trials_per_x,
    })
}

/// Misclassification rates (k-means, GMM) of ASE-based block recovery.
pub fn classification_trial(mixture: &MixtureSpec, n: usize, stream: SeedStream) -> Result<(f64, f64)> {
    let model = LatentPositionModel::PointMass { mixture: mixture.clone() };
    let draw = draw_positions(&model, n, stream.named("positions"))?;
    let truth = draw.labels.expect("point-mass draws carry labels");
    let g = sample_from_positions(&draw.positions, stream.named("graph"), false, true)?;
    let xhat = embed_symmetric(g.adjacency(), mixture.dim(), EmbeddingKind::Ase)?.coords;
    let k = mixture.k();
    let km = kmeans(&xhat, k, 10, stream.named("kmeans"))?;
    let gm = gmm_em(&xhat, k, CovarianceClass::Full, 3, stream.named("gmm"))?;
    Ok((misclassification_rate(&km.labels, &truth), misclassification_rate(&gm.labels, &truth)))
}

/// A planted two-level hierarchical SBM.
#[derive(Debug, Clone)]
pub struct PlantedHsbm {
    pub graph: Graph,
    /// Super-block of each vertex.
    pub super_labels: Vec<usize>,
    /// Sub-block of each vertex, numbered globally.
    pub sub_labels: Vec<usize>,
    /// Motif of each super-block.
    pub motifs: Vec<usize>,
}

/// Samples an SBM with super-blocks of `sub_sizes.len()` sub-blocks each;
/// super-block s uses block matrix `patterns[motifs[s]]`, and vertices in
/// different super-blocks connect with probability `p_out`.
pub fn planted_hsbm(patterns: &[DMatrix<f64>], motifs: &[usize], sub_sizes: &[usize], p_out: f64, stream: SeedStream) -> Result<PlantedHsbm> {
    let r = sub_sizes.len();
    if patterns.iter().any(|b| b.shape() != (r, r)) {
        return Err(RdpgError::DimensionMismatch(format!("patterns must be {r}×{r}")));
    }
    if let Some(&m) = motifs.iter().find(|&&m| m >= patterns.len()) {
        return Err(RdpgError::InvalidArgument(format!("motif {m} has no pattern")));
    }
    let mut super_labels = Vec::new();
    let mut sub_labels = Vec::new();
    for s in 0..motifs.len() {
        for (b, &size) in sub_sizes.iter().enumerate() {
            super_labels.extend(std::iter::repeat(s).take(size));
            sub_labels.extend(std::iter::repeat(s * r + b).take(size));
        }
    }
    let n = super_labels.len();
    let p = DMatrix::from_fn(n, n, |i, j| {
        let (si, sj) = (super_labels[i], super_labels[j]);
        if si == sj {
            patterns[motifs[si]][(sub_labels[i] % r, sub_labels[j] % r)]
        } else {
            p_out
        }
    });
    let graph = sample_adjacency(&ProbabilityMatrix::new(p)?, stream, false, true)?;
    Ok(PlantedHsbm {
        graph,
        super_labels,
        sub_labels,
        motifs: motifs.to_vec(),
    })
}
