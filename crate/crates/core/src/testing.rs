//! Two-sample graph hypothesis tests: semiparametric Procrustes statistics
//! with a parametric bootstrap, the omnibus and Procrustes known-P tests,
//! kernel MMD tests on embeddings, and Fisher's p-value combination.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{ase, embed_symmetric, omni_embed, EmbeddingKind};
use crate::error::{RdpgError, Result};
use crate::graph::{sample_adjacency, Graph, ProbabilityMatrix};
use crate::rng::SeedStream;
use crate::spectral::procrustes_align;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemiparVariant {
    /// X = Y W
    Identity,
    /// X = c Y W
    Scaling,
    /// X = D Y W
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    SemiparBootstrap,
    Omnibus,
    Procrustes,
    Mmd,
    Fisher,
}

/// Outcome of a Monte Carlo calibrated test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: TestMethod,
    pub variant: Option<String>,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n_replicates: usize,
    pub seed: u64,
    /// Smallest embedding row norm over both graphs, where it matters.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_row_norm: Option<f64>,
    #[serde(skip)]
    pub replicates: Vec<f64>,
}

impl TestReport {
    fn new(method: TestMethod, variant: Option<String>, statistic: f64, p_value: f64, alpha: f64, seed: u64, replicates: Vec<f64>) -> Self {
        TestReport {
            method,
            variant,
            statistic,
            p_value,
            alpha,
            reject: p_value <= alpha,
            n_replicates: replicates.len(),
            seed,
            min_row_norm: None,
            replicates,
        }
    }
}

/// (#{s ≥ T} + 0.5) / count, capped at 1.
pub fn continuity_p_value(statistic: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&s| s >= statistic).count();
    ((exceed as f64 + 0.5) / replicates.len() as f64).min(1.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RdpgError::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

fn check_count(name: &str, count: usize) -> Result<()> {
    if count == 0 {
        return Err(RdpgError::InvalidArgument(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn row_norms(z: &DMatrix<f64>) -> Vec<f64> {
    z.row_iter().map(|r| r.norm()).collect()
}

/// Rows scaled to unit length.
pub fn project_rows(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norms = row_norms(z);
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(RdpgError::ZeroRow(i));
    }
    let mut out = z.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row /= norms[i];
    }
    Ok(out)
}

pub fn min_row_norm(z: &DMatrix<f64>) -> f64 {
    row_norms(z).into_iter().fold(f64::INFINITY, f64::min)
}

/// The Procrustes distance in the numerator of each statistic.
pub fn semipar_numerator(x: &DMatrix<f64>, y: &DMatrix<f64>, variant: SemiparVariant) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(RdpgError::DimensionMismatch(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    match variant {
        SemiparVariant::Identity => Ok(procrustes_align(x, y)?.distance),
        SemiparVariant::Scaling => {
            let (fx, fy) = (x.norm(), y.norm());
            if fx == 0.0 || fy == 0.0 {
                return Err(RdpgError::ZeroRow(0));
            }
            Ok(procrustes_align(&(x / fx), &(y / fy))?.distance)
        }
        SemiparVariant::Diagonal => Ok(procrustes_align(&project_rows(x)?, &project_rows(y)?)?.distance),
    }
}

/// Normalized semiparametric test statistic for the chosen null.
pub fn semipar_statistic(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma_a: f64, gamma_b: f64, variant: SemiparVariant) -> Result<f64> {
    for g in [gamma_a, gamma_b] {
        if !(g > 0.0) {
            return Err(RdpgError::NonPositiveGamma(g));
        }
    }
    let num = semipar_numerator(x, y, variant)?;
    let d = x.ncols() as f64;
    let (ra, rb) = ((d / gamma_a).sqrt(), (d / gamma_b).sqrt());
    let denom = match variant {
        SemiparVariant::Identity => ra + rb,
        SemiparVariant::Scaling => 2.0 * ra / x.norm() + 2.0 * rb / y.norm(),
        SemiparVariant::Diagonal => 2.0 * ra / min_row_norm(x) + 2.0 * rb / min_row_norm(y),
    };
    Ok(num / denom)
}

fn embed(g: &Graph, d: usize) -> Result<DMatrix<f64>> {
    Ok(ase(g, d, false)?.coords)
}

fn graph_numerator(a: &Graph, b: &Graph, d: usize, variant: SemiparVariant) -> Result<f64> {
    semipar_numerator(&embed(a, d)?, &embed(b, d)?, variant)
}

fn rdpg_probabilities(x: &DMatrix<f64>) -> ProbabilityMatrix {
    ProbabilityMatrix::clipped(x * x.transpose())
}

fn check_pair(a: &Graph, b: &Graph) -> Result<()> {
    if a.n() != b.n() {
        return Err(RdpgError::DimensionMismatch(format!("graphs have {} and {} vertices", a.n(), b.n())));
    }
    if a.is_directed() || b.is_directed() {
        return Err(RdpgError::InvalidGraph("two-sample tests need undirected graphs".into()));
    }
    Ok(())
}

/// Null replicates of the semiparametric statistic from pairs of RDPG(X̂) draws.
fn bootstrap_side(x: &DMatrix<f64>, d: usize, bs: usize, variant: SemiparVariant, stream: SeedStream) -> Result<Vec<f64>> {
    let p = rdpg_probabilities(x);
    (0..bs)
        .into_par_iter()
        .map(|b| {
            let s = stream.substream(b as u64);
            let a = sample_adjacency(&p, s.named("A"), false, true)?;
            let bg = sample_adjacency(&p, s.named("B"), false, true)?;
            graph_numerator(&a, &bg, d, variant)
        })
        .collect()
}

/// Parametric bootstrap test of equality of latent positions up to the
/// variant's nuisance transformation. The observed statistic and every
/// replicate are the variant's Procrustes distance, without the γ
/// normalization of [`semipar_statistic`]. The reported p-value is the larger of
/// the two bootstrap p-values; replicates hold the X-side draws then the Y-side draws.
pub fn bootstrap_test(a: &Graph, b: &Graph, d: usize, bs: usize, variant: SemiparVariant, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    check_pair(a, b)?;
    check_count("bs", bs)?;
    check_alpha(alpha)?;
    let x = embed(a, d)?;
    let y = embed(b, d)?;
    let t = semipar_numerator(&x, &y, variant)?;
    let sx = bootstrap_side(&x, d, bs, variant, stream.named("bootstrap-X"))?;
    let sy = bootstrap_side(&y, d, bs, variant, stream.named("bootstrap-Y"))?;
    let p = continuity_p_value(t, &sx).max(continuity_p_value(t, &sy));
    let mut reps = sx;
    reps.extend(sy);
    let mut report = TestReport::new(TestMethod::SemiparBootstrap, Some(format!("{variant:?}")), t, p, alpha, stream.seed(), reps);
    report.n_replicates = bs;
    report.min_row_norm = Some(min_row_norm(&x).min(min_row_norm(&y)));
    Ok(report)
}

/// Statistic of the form Σ‖X̂_i − Ŷ_i‖² for paired vertex estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairedStatistic {
    /// Rows i and n + i of the joint omnibus embedding.
    Omnibus,
    /// Separate ASEs aligned by orthogonal Procrustes.
    Procrustes,
}

impl PairedStatistic {
    pub fn compute(self, a: &Graph, b: &Graph, d: usize) -> Result<f64> {
        check_pair(a, b)?;
        match self {
            PairedStatistic::Omnibus => {
                let z = omni_embed(&[a.clone(), b.clone()], d)?;
                let n = a.n();
                let top = z.coords.rows(0, n);
                let bottom = z.coords.rows(n, n);
                Ok((top - bottom).norm_squared())
            }
            PairedStatistic::Procrustes => {
                let x = embed_symmetric(a.adjacency(), d, EmbeddingKind::Ase)?;
                let y = embed_symmetric(b.adjacency(), d, EmbeddingKind::Ase)?;
                Ok(procrustes_align(&x.coords, &y.coords)?.distance.powi(2))
            }
        }
    }

    fn method(self) -> TestMethod {
        match self {
            PairedStatistic::Omnibus => TestMethod::Omnibus,
            PairedStatistic::Procrustes => TestMethod::Procrustes,
        }
    }
}

/// Null distribution for the paired tests.
#[derive(Debug, Clone)]
pub enum NullModel {
    /// Known edge-probability matrix.
    Supplied(ProbabilityMatrix),
    /// Rank-d reconstruction from the ASE of (A + B)/2, clipped to [0, 1].
    EstimateFromMean,
}

/// Monte Carlo draws of the statistic for pairs of independent graphs from P.
pub fn paired_null(stat: PairedStatistic, p: &ProbabilityMatrix, d: usize, mc: usize, stream: SeedStream) -> Result<Vec<f64>> {
    check_count("mc", mc)?;
    (0..mc)
        .into_par_iter()
        .map(|r| {
            let s = stream.substream(r as u64);
            let a = sample_adjacency(p, s.named("A"), false, true)?;
            let b = sample_adjacency(p, s.named("B"), false, true)?;
            stat.compute(&a, &b, d)
        })
        .collect()
}

/// Calibrates an observed pair against precomputed null replicates.
pub fn paired_test_with_null(stat: PairedStatistic, a: &Graph, b: &Graph, d: usize, null: Vec<f64>, alpha: f64, seed: u64) -> Result<TestReport> {
    check_alpha(alpha)?;
    if null.is_empty() {
        return Err(RdpgError::EmptyInput);
    }
    let t = stat.compute(a, b, d)?;
    let p = continuity_p_value(t, &null);
    Ok(TestReport::new(stat.method(), None, t, p, alpha, seed, null))
}

pub fn mean_graph_probabilities(a: &Graph, b: &Graph, d: usize) -> Result<ProbabilityMatrix> {
    check_pair(a, b)?;
    let mean = (a.adjacency() + b.adjacency()) * 0.5;
    let x = embed_symmetric(&mean, d, EmbeddingKind::Ase)?.coords;
    Ok(rdpg_probabilities(&x))
}

fn paired_test(stat: PairedStatistic, a: &Graph, b: &Graph, d: usize, mc: usize, null: &NullModel, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    check_pair(a, b)?;
    check_alpha(alpha)?;
    let estimated;
    let p = match null {
        NullModel::Supplied(p) => {
            if p.n() != a.n() {
                return Err(RdpgError::DimensionMismatch(format!("null P has {} rows for {} vertices", p.n(), a.n())));
            }
            p
        }
        NullModel::EstimateFromMean => {
            estimated = mean_graph_probabilities(a, b, d)?;
            &estimated
        }
    };
    let reps = paired_null(stat, p, d, mc, stream.named("null"))?;
    paired_test_with_null(stat, a, b, d, reps, alpha, stream.seed())
}

/// Omnibus test of equal latent positions.
pub fn omnibus_test(a: &Graph, b: &Graph, d: usize, mc: usize, null: &NullModel, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    paired_test(PairedStatistic::Omnibus, a, b, d, mc, null, alpha, stream)
}

/// Procrustes-aligned ASE test of equal latent positions.
pub fn procrustes_test(a: &Graph, b: &Graph, d: usize, mc: usize, null: &NullModel, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    paired_test(PairedStatistic::Procrustes, a, b, d, mc, null, alpha, stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance of the pooled sample.
    MedianHeuristic,
}

/// Gaussian radial kernel exp(−‖x − y‖² / (2h²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

fn sq_dist(x: &DMatrix<f64>, i: usize, y: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(i, c)] - y[(j, c)]).powi(2)).sum()
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Self {
        KernelSpec {
            bandwidth: Bandwidth::Fixed(bandwidth),
        }
    }

    /// Concrete bandwidth for a pooled sample. A median of zero falls back
    /// to the mean nonzero distance, then to 1.
    pub fn resolve(&self, pooled: &DMatrix<f64>) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(RdpgError::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
            Bandwidth::MedianHeuristic => {
                let n = pooled.nrows();
                let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        dists.push(sq_dist(pooled, i, pooled, j).sqrt());
                    }
                }
                if dists.is_empty() {
                    return Ok(1.0);
                }
                let mid = dists.len() / 2;
                let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
                let mut median = *m;
                if dists.len() % 2 == 0 {
                    let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    median = 0.5 * (median + lower);
                }
                if median > 0.0 {
                    return Ok(median);
                }
                let nonzero: Vec<f64> = dists.into_iter().filter(|&v| v > 0.0).collect();
                Ok(if nonzero.is_empty() {
                    1.0
                } else {
                    nonzero.iter().sum::<f64>() / nonzero.len() as f64
                })
            }
        }
    }
}

fn stack(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols());
    z.rows_mut(0, x.nrows()).copy_from(x);
    z.rows_mut(x.nrows(), y.nrows()).copy_from(y);
    z
}

fn gram(z: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = z.nrows();
    let scale = -1.0 / (2.0 * h * h);
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (scale * sq_dist(z, i, z, j)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// U-statistic from a pooled Gram matrix; `in_x[i]` marks members of the first sample.
fn ustat_from_gram(k: &DMatrix<f64>, in_x: &[bool]) -> f64 {
    let n = in_x.iter().filter(|&&b| b).count() as f64;
    let m = in_x.len() as f64 - n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..in_x.len() {
        for j in (i + 1)..in_x.len() {
            let v = k[(i, j)];
            match (in_x[i], in_x[j]) {
                (true, true) => sxx += v,
                (false, false) => syy += v,
                _ => sxy += v,
            }
        }
    }
    2.0 * sxx / (n * (n - 1.0)) - 2.0 * sxy / (n * m) + 2.0 * syy / (m * (m - 1.0))
}

fn check_samples(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(RdpgError::DimensionMismatch(format!("samples have {} and {} columns", x.ncols(), y.ncols())));
    }
    for s in [x, y] {
        if s.nrows() < 2 {
            return Err(RdpgError::TooFewPoints(s.nrows()));
        }
    }
    Ok(())
}

/// Unbiased MMD² estimate between the row samples X and Y.
pub fn mmd_ustat(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &KernelSpec) -> Result<f64> {
    check_samples(x, y)?;
    let z = stack(x, y);
    let h = kernel.resolve(&z)?;
    let mut in_x = vec![true; x.nrows()];
    in_x.resize(z.nrows(), false);
    Ok(ustat_from_gram(&gram(&z, h), &in_x))
}

/// Linear-time MMD² estimate over ⌊min(n, m)/2⌋ disjoint quadruples.
pub fn mmd_linear(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &KernelSpec) -> Result<f64> {
    check_samples(x, y)?;
    let h = match kernel.bandwidth {
        Bandwidth::Fixed(_) => kernel.resolve(x)?,
        Bandwidth::MedianHeuristic => {
            // subsample for the bandwidth so the estimator stays linear
            let take = |s: &DMatrix<f64>| s.rows(0, s.nrows().min(500)).into_owned();
            kernel.resolve(&stack(&take(x), &take(y)))?
        }
    };
    let scale = -1.0 / (2.0 * h * h);
    let k = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| (scale * sq_dist(a, i, b, j)).exp();
    let pairs = x.nrows().min(y.nrows()) / 2;
    let total: f64 = (0..pairs)
        .map(|t| {
            let (i, j) = (2 * t, 2 * t + 1);
            k(x, i, x, j) + k(y, i, y, j) - k(x, i, y, j) - k(x, j, y, i)
        })
        .sum();
    Ok(total / pairs as f64)
}

/// Permutation test of equal distributions; statistic (n + m)·U with the
/// bandwidth fixed from the pooled sample before permuting.
pub fn mmd_permutation_test(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &KernelSpec, n_perm: usize, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    check_samples(x, y)?;
    check_count("n_perm", n_perm)?;
    check_alpha(alpha)?;
    let z = stack(x, y);
    let total = z.nrows();
    let h = kernel.resolve(&z)?;
    let k = gram(&z, h);
    let mut labels = vec![true; x.nrows()];
    labels.resize(total, false);
    let factor = total as f64;
    let t = factor * ustat_from_gram(&k, &labels);
    let reps: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut perm = labels.clone();
            perm.shuffle(&mut stream.substream(r as u64).rng());
            factor * ustat_from_gram(&k, &perm)
        })
        .collect();
    let p = continuity_p_value(t, &reps);
    Ok(TestReport::new(TestMethod::Mmd, None, t, p, alpha, stream.seed(), reps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MmdVariant {
    /// Equality of F and G up to rotation.
    Raw,
    /// Each embedding divided by ‖X̂‖_F / √n.
    Scaled,
    /// Rows projected onto the unit sphere.
    Projected,
}

/// Flips each column so its third moment is nonnegative, removing the
/// per-column sign ambiguity of separately computed eigenvectors.
pub fn orient_by_skewness(z: &mut DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        let m3: f64 = col.iter().map(|v| v * v * v).sum();
        if m3 < 0.0 {
            col.neg_mut();
        }
    }
}

/// The transformed embedding used by the MMD test of one graph.
pub fn mmd_sample(g: &Graph, d: usize, variant: MmdVariant) -> Result<DMatrix<f64>> {
    if g.is_directed() {
        return Err(RdpgError::InvalidGraph("MMD test needs undirected graphs".into()));
    }
    let mut x = embed_symmetric(g.adjacency(), d, EmbeddingKind::Ase)?.coords;
    orient_by_skewness(&mut x);
    match variant {
        MmdVariant::Raw => Ok(x),
        MmdVariant::Scaled => {
            let s = x.norm() / (x.nrows() as f64).sqrt();
            if s == 0.0 {
                return Err(RdpgError::ZeroRow(0));
            }
            Ok(x / s)
        }
        MmdVariant::Projected => project_rows(&x),
    }
}

/// Kernel two-sample test on the ASEs of two graphs, which may differ in size.
pub fn mmd_test(a: &Graph, b: &Graph, d: usize, variant: MmdVariant, n_perm: usize, kernel: &KernelSpec, alpha: f64, stream: SeedStream) -> Result<TestReport> {
    let x = mmd_sample(a, d, variant)?;
    let y = mmd_sample(b, d, variant)?;
    let mut report = mmd_permutation_test(&x, &y, kernel, n_perm, alpha, stream)?;
    report.variant = Some(format!("{variant:?}"));
    report.min_row_norm = Some(min_row_norm(&x).min(min_row_norm(&y)));
    Ok(report)
}

/// Fisher's method: returns (−2 Σ ln p_i, upper χ²_{2k} tail probability).
pub fn fisher_combine(p_values: &[f64]) -> Result<(f64, f64)> {
    if p_values.is_empty() {
        return Err(RdpgError::EmptyInput);
    }
    if let Some(&bad) = p_values.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(RdpgError::OutOfRangeP(bad));
    }
    let stat = -2.0 * p_values.iter().map(|p| p.ln()).sum::<f64>();
    let half = stat / 2.0;
    // upper tail of χ² with 2k dof: e^{-x/2} Σ_{j<k} (x/2)^j / j!
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..p_values.len() {
        term *= half / j as f64;
        sum += term;
    }
    Ok((stat, ((-half).exp() * sum).min(1.0)))
}
