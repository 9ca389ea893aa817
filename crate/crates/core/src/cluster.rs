//! K-means, Gaussian mixtures with BIC selection, angle-based clustering and
//! recursive hierarchical motif detection for graphs.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed_symmetric, EmbeddingKind};
use crate::error::{RdpgError, Result};
use crate::graph::Graph;
use crate::rng::SeedStream;
use crate::testing::{mmd_linear, mmd_ustat, orient_by_skewness, project_rows, KernelSpec};

pub const MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-8;
const EM_TOL_PER_POINT: f64 = 1e-8;
const RESEED_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning run.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist_rows(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (n, d) = points.shape();
    let mut centers = DMatrix::zeros(k, d);
    centers.set_row(0, &points.row(rng.gen_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist_rows(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, slot) in dist.iter_mut().enumerate() {
            *slot = slot.min(sq_dist_rows(points, i, &centers, c));
        }
    }
    centers
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>) -> Result<KMeansResult> {
    let (n, d) = points.shape();
    let k = centers.nrows();
    let mut labels = vec![0; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut inertia = 0.0;
        for i in 0..n {
            let (c, dist) = nearest(points, i, &centers);
            labels[i] = c;
            inertia += dist;
        }
        // empty clusters take the point farthest from its center
        for _ in 0..RESEED_ATTEMPTS {
            let mut counts = vec![0usize; k];
            labels.iter().for_each(|&l| counts[l] += 1);
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let (far, far_d) = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, sq_dist_rows(points, i, &centers, labels[i])))
                .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            if far == usize::MAX || far_d <= 0.0 {
                return Err(RdpgError::EmptyClusterUnrecoverable);
            }
            centers.set_row(empty, &points.row(far));
            labels[far] = empty;
            inertia -= far_d;
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        if counts.contains(&0) {
            return Err(RdpgError::EmptyClusterUnrecoverable);
        }
        let mut sums = DMatrix::zeros(k, d);
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += points.row(i);
        }
        for c in 0..k {
            centers.set_row(c, &(sums.row(c) / counts[c] as f64));
        }
        let after: f64 = (0..n).map(|i| sq_dist_rows(points, i, &centers, labels[i])).sum();
        trace.push(after);
        let change = (prev - after).abs() / prev.max(f64::MIN_POSITIVE);
        prev = after;
        if after == 0.0 || change < KMEANS_TOL {
            break;
        }
        let _ = inertia;
    }
    // final assignment against the final centers
    let mut inertia = 0.0;
    let mut final_labels = labels.clone();
    for i in 0..n {
        let (c, dist) = nearest(points, i, &centers);
        final_labels[i] = c;
        inertia += dist;
    }
    let mut counts = vec![0usize; k];
    final_labels.iter().for_each(|&l| counts[l] += 1);
    if counts.contains(&0) || inertia > prev {
        final_labels = labels;
        inertia = prev;
    }
    Ok(KMeansResult {
        labels: final_labels,
        centers,
        inertia,
        inertia_trace: trace,
    })
}

/// k-means++ seeding followed by Lloyd iterations; best of `restarts` runs.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, stream: SeedStream) -> Result<KMeansResult> {
    let n = points.nrows();
    if n == 0 {
        return Err(RdpgError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(RdpgError::InvalidArgument(format!("need 1 <= K <= n={n}, got K={k}")));
    }
    let mut best: Option<KMeansResult> = None;
    let mut last_err = None;
    for r in 0..restarts.max(1) {
        let mut rng = stream.substream(r as u64).rng();
        let centers = kmeans_pp(points, k, &mut rng);
        match lloyd(points, centers) {
            Ok(res) => {
                if best.as_ref().map_or(true, |b| res.inertia < b.inertia) {
                    best = Some(res);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(RdpgError::EmptyClusterUnrecoverable))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovarianceClass {
    Full,
    Diagonal,
    Spherical,
}

impl CovarianceClass {
    fn parameters(self, k: usize, d: usize) -> usize {
        let cov = match self {
            CovarianceClass::Full => d * (d + 1) / 2,
            CovarianceClass::Diagonal => d,
            CovarianceClass::Spherical => 1,
        };
        k * (cov + d) + k - 1
    }
}

/// Fitted Gaussian mixture. BIC follows the maximization convention
/// 2·loglik − parameters·ln n.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub k: usize,
    pub class: CovarianceClass,
    pub weights: Vec<f64>,
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    pub loglik: f64,
    pub bic: f64,
    /// Most probable component per point.
    pub labels: Vec<usize>,
    /// Log-likelihood after each EM iteration.
    pub loglik_trace: Vec<f64>,
}

struct Component {
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

fn components(covs: &[DMatrix<f64>]) -> Result<Vec<Component>> {
    let d = covs[0].nrows() as f64;
    covs.iter()
        .enumerate()
        .map(|(k, s)| {
            if s.diagonal().iter().any(|&v| !(v > 0.0)) {
                return Err(RdpgError::DegenerateComponent(format!("component {k} has zero variance")));
            }
            let chol = Cholesky::new(s.clone())
                .ok_or_else(|| RdpgError::DegenerateComponent(format!("covariance of component {k} is not positive definite")))?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Ok(Component {
                chol,
                log_norm: -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet),
            })
        })
        .collect()
}

/// Log-likelihood and responsibilities (n × K).
fn e_step(points: &DMatrix<f64>, weights: &[f64], means: &DMatrix<f64>, covs: &[DMatrix<f64>]) -> Result<(f64, DMatrix<f64>)> {
    let comps = components(covs)?;
    let (n, _) = points.shape();
    let k = weights.len();
    let mut resp = DMatrix::zeros(n, k);
    let mut total = 0.0;
    for i in 0..n {
        let x = points.row(i).transpose();
        let mut logp = vec![0.0; k];
        for c in 0..k {
            let diff = &x - means.row(c).transpose();
            let z = comps[c].chol.l().solve_lower_triangular(&diff).unwrap_or(diff);
            logp[c] = weights[c].ln() + comps[c].log_norm - 0.5 * z.norm_squared();
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logp.iter().map(|v| (v - m).exp()).sum();
        let lse = m + s.ln();
        total += lse;
        for c in 0..k {
            resp[(i, c)] = (logp[c] - lse).exp();
        }
    }
    Ok((total, resp))
}

fn restrict(s: DMatrix<f64>, class: CovarianceClass) -> DMatrix<f64> {
    let d = s.nrows();
    match class {
        CovarianceClass::Full => s,
        CovarianceClass::Diagonal => DMatrix::from_diagonal(&s.diagonal()),
        CovarianceClass::Spherical => DMatrix::identity(d, d) * (s.trace() / d as f64),
    }
}

/// Adds 1e-8·trace/d to the diagonal.
fn regularize(mut s: DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let eps = 1e-8 * s.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] += eps;
    }
    s
}

fn m_step(points: &DMatrix<f64>, resp: &DMatrix<f64>, class: CovarianceClass) -> Result<(Vec<f64>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let (n, d) = points.shape();
    let k = resp.ncols();
    // variances at roundoff level of the data scale count as zero
    let floor = (1e3 * f64::EPSILON * points.amax()).powi(2);
    let mut weights = Vec::with_capacity(k);
    let mut means = DMatrix::zeros(k, d);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.column(c).sum();
        if nk / (n as f64) < 1.0 / (10.0 * n as f64) {
            return Err(RdpgError::DegenerateComponent(format!("component {c} has weight {}", nk / n as f64)));
        }
        weights.push(nk / n as f64);
        let mean = (points.transpose() * resp.column(c)) / nk;
        let mut s = DMatrix::zeros(d, d);
        for i in 0..n {
            let diff = points.row(i).transpose() - &mean;
            s += &diff * diff.transpose() * resp[(i, c)];
        }
        s /= nk;
        let s = restrict(s, class);
        if s.diagonal().iter().any(|&v| v <= floor) {
            return Err(RdpgError::DegenerateComponent(format!("component {c} has no spread")));
        }
        means.set_row(c, &mean.transpose());
        covs.push(regularize(s));
    }
    Ok((weights, means, covs))
}

fn hard_labels(resp: &DMatrix<f64>) -> Vec<usize> {
    resp.row_iter().map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (c, &v)| if v > a.1 { (c, v) } else { a }).0).collect()
}

fn em_run(points: &DMatrix<f64>, k: usize, class: CovarianceClass, stream: SeedStream) -> Result<GmmModel> {
    let (n, d) = points.shape();
    let init = kmeans(points, k, 1, stream)?;
    let mut resp = DMatrix::zeros(n, k);
    for (i, &l) in init.labels.iter().enumerate() {
        resp[(i, l)] = 1.0;
    }
    let (mut weights, mut means, mut covs) = m_step(points, &resp, class)?;
    let mut trace = Vec::new();
    let mut loglik = f64::NEG_INFINITY;
    for _ in 0..MAX_ITER {
        let (ll, r) = e_step(points, &weights, &means, &covs)?;
        resp = r;
        trace.push(ll);
        let gain = ll - loglik;
        loglik = ll;
        if gain.abs() < EM_TOL_PER_POINT * n as f64 {
            break;
        }
        (weights, means, covs) = m_step(points, &resp, class)?;
    }
    let bic = 2.0 * loglik - class.parameters(k, d) as f64 * (n as f64).ln();
    Ok(GmmModel {
        k,
        class,
        weights,
        means,
        covariances: covs,
        loglik,
        bic,
        labels: hard_labels(&resp),
        loglik_trace: trace,
    })
}

/// EM for a K-component Gaussian mixture from k-means starts; best log-likelihood of `restarts` runs.
pub fn gmm_em(points: &DMatrix<f64>, k: usize, class: CovarianceClass, restarts: usize, stream: SeedStream) -> Result<GmmModel> {
    let n = points.nrows();
    if n == 0 {
        return Err(RdpgError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(RdpgError::InvalidArgument(format!("need 1 <= K <= n={n}, got K={k}")));
    }
    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for r in 0..restarts.max(1) {
        match em_run(points, k, class, stream.substream(r as u64)) {
            Ok(m) => {
                if best.as_ref().map_or(true, |b| m.loglik > b.loglik) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| RdpgError::DegenerateComponent("no run succeeded".into())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCell {
    pub k: usize,
    pub class: CovarianceClass,
    pub bic: Option<f64>,
    pub status: String,
}

/// Fits every (K, class) pair for K = 1..=kmax and returns the BIC maximizer with the full table.
pub fn select_k_bic(points: &DMatrix<f64>, kmax: usize, classes: &[CovarianceClass], restarts: usize, stream: SeedStream) -> Result<(GmmModel, Vec<BicCell>)> {
    if kmax == 0 || classes.is_empty() {
        return Err(RdpgError::InvalidArgument("need kmax >= 1 and at least one covariance class".into()));
    }
    let mut table = Vec::new();
    let mut best: Option<GmmModel> = None;
    let mut first_err = None;
    for k in 1..=kmax.min(points.nrows()) {
        for (ci, &class) in classes.iter().enumerate() {
            let s = stream.substream((k * classes.len() + ci) as u64);
            match gmm_em(points, k, class, restarts, s) {
                Ok(m) => {
                    table.push(BicCell {
                        k,
                        class,
                        bic: Some(m.bic),
                        status: "ok".into(),
                    });
                    if best.as_ref().map_or(true, |b| m.bic > b.bic) {
                        best = Some(m);
                    }
                }
                Err(e) => {
                    table.push(BicCell {
                        k,
                        class,
                        bic: None,
                        status: e.kind().into(),
                    });
                    first_err.get_or_insert(e);
                }
            }
        }
    }
    match best {
        Some(m) => Ok((m, table)),
        None => Err(first_err.unwrap_or(RdpgError::EmptyInput)),
    }
}

/// Clusters points by direction: rows are projected onto the unit sphere and
/// fitted with a spherical Gaussian mixture. If the mixture degenerates, k-means
/// on the projected rows is used, and if that fails every point gets label 0.
pub fn angle_cluster(points: &DMatrix<f64>, k: usize, stream: SeedStream) -> Result<Vec<usize>> {
    let projected = project_rows(points)?;
    match gmm_em(&projected, k, CovarianceClass::Spherical, 3, stream.named("gmm")) {
        Ok(m) => Ok(m.labels),
        Err(RdpgError::DegenerateComponent(_)) => match kmeans(&projected, k, 3, stream.named("kmeans")) {
            Ok(r) => Ok(r.labels),
            Err(RdpgError::EmptyClusterUnrecoverable) => Ok(vec![0; points.nrows()]),
            Err(e) => Err(e),
        },
        Err(e) => Err(e),
    }
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let sum_cells: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let sum_a: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(a.len() as f64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}

/// Fraction of points misassigned under the best matching of cluster labels to classes.
pub fn misclassification_rate(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(labels.len(), truth.len(), "labelings differ in length");
    let k = labels.iter().chain(truth).max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; k]; k];
    for (&l, &t) in labels.iter().zip(truth) {
        counts[l][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute_max(&mut perm, 0, &counts, &mut best);
    1.0 - best as f64 / labels.len() as f64
}

fn permute_max(perm: &mut Vec<usize>, i: usize, counts: &[Vec<usize>], best: &mut usize) {
    if i == perm.len() {
        let agree = perm.iter().enumerate().map(|(l, &t)| counts[l][t]).sum();
        *best = (*best).max(agree);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute_max(perm, i + 1, counts, best);
        perm.swap(i, j);
    }
}

/// How the number of subgraphs is chosen at each node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KSelector {
    Fixed(usize),
    /// BIC over spherical mixtures on the projected embedding, K = 1..=kmax.
    Bic { kmax: usize },
}

/// How the motif dendrogram is cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MotifCut {
    /// Cut inside the largest ratio between consecutive merge heights.
    LargestGap,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsbmConfig {
    /// Embedding dimension at the root.
    pub top_dim: usize,
    /// Embedding dimension for subgraphs and deeper levels.
    pub sub_dim: usize,
    /// Nodes at or below this size are not split.
    pub min_size: usize,
    pub k_selector: KSelector,
    pub kernel: KernelSpec,
    pub motif_cut: MotifCut,
    pub max_depth: usize,
    /// Pairs with more points than this use the linear-time MMD estimate.
    pub linear_threshold: usize,
}

impl HsbmConfig {
    pub fn new(top_dim: usize, sub_dim: usize, min_size: usize, k_selector: KSelector) -> Self {
        HsbmConfig {
            top_dim,
            sub_dim,
            min_size,
            k_selector,
            kernel: KernelSpec::default(),
            motif_cut: MotifCut::LargestGap,
            max_depth: 5,
            linear_threshold: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsbmNode {
    /// Vertex ids of the input graph.
    pub vertices: Vec<usize>,
    pub depth: usize,
    /// Embedding dimension used to split this node, if it was split.
    pub dim: Option<usize>,
    pub children: Vec<HsbmNode>,
    /// Motif of each child; None for children too small to compare.
    pub motifs: Vec<Option<usize>>,
    /// Pairwise MMD dissimilarities between children (rows of Ŝ).
    pub dissimilarity: Vec<Vec<f64>>,
    /// Average-linkage merges over the rows of Ŝ, in the linkage's labeling.
    pub dendrogram: Vec<Merge>,
    /// Split was stopped by the depth cap.
    pub truncated: bool,
}

impl HsbmNode {
    fn leaf(vertices: Vec<usize>, depth: usize) -> Self {
        HsbmNode {
            vertices,
            depth,
            dim: None,
            children: Vec::new(),
            motifs: Vec::new(),
            dissimilarity: Vec::new(),
            dendrogram: Vec::new(),
            truncated: false,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Label of each vertex by child index, in the order of `vertices`.
    pub fn child_labels(&self) -> Vec<usize> {
        let mut pos = std::collections::HashMap::new();
        for (c, child) in self.children.iter().enumerate() {
            for &v in &child.vertices {
                pos.insert(v, c);
            }
        }
        self.vertices.iter().map(|v| pos.get(v).copied().unwrap_or(0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsbmTree {
    pub root: HsbmNode,
    /// The input was disconnected and only its largest component was decomposed.
    pub largest_component_only: bool,
    pub truncated: bool,
}

fn mmd_dissimilarity(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &HsbmConfig) -> Result<f64> {
    if x.nrows() + y.nrows() > cfg.linear_threshold {
        mmd_linear(x, y, &cfg.kernel)
    } else {
        mmd_ustat(x, y, &cfg.kernel)
    }
}

/// Cluster ids (0-based, by first appearance) after applying `merges` merges.
fn cut_dendrogram(steps: &[kodama::Step<f64>], r: usize, merges: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..2 * r).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, s) in steps.iter().take(merges).enumerate() {
        let new = r + i;
        let a = find(&mut parent, s.cluster1);
        let b = find(&mut parent, s.cluster2);
        parent[a] = new;
        parent[b] = new;
    }
    let mut ids = std::collections::HashMap::new();
    (0..r)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect()
}

fn motif_count(steps: &[kodama::Step<f64>], r: usize, cut: MotifCut) -> usize {
    match cut {
        MotifCut::Fixed(c) => c.clamp(1, r),
        MotifCut::LargestGap => {
            if r <= 2 {
                return r;
            }
            let h: Vec<f64> = steps.iter().map(|s| s.dissimilarity.max(0.0)).collect();
            let tiny = 1e-12 * h.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..h.len() - 1 {
                let ratio = h[j + 1] / h[j].max(tiny);
                if ratio > best.1 {
                    best = (j, ratio);
                }
            }
            // keep merges 0..=j
            r - (best.0 + 1)
        }
    }
}

struct Splitter<'a> {
    graph: &'a Graph,
    cfg: &'a HsbmConfig,
    truncated: bool,
}

impl Splitter<'_> {
    fn split(&mut self, vertices: Vec<usize>, depth: usize, dim: usize, stream: SeedStream) -> Result<HsbmNode> {
        let n = vertices.len();
        if n <= self.cfg.min_size || dim >= n {
            return Ok(HsbmNode::leaf(vertices, depth));
        }
        if depth >= self.cfg.max_depth {
            self.truncated = true;
            let mut leaf = HsbmNode::leaf(vertices, depth);
            leaf.truncated = true;
            return Ok(leaf);
        }
        let sub = self.graph.induced_subgraph(&vertices);
        let x = embed_symmetric(sub.adjacency(), dim, EmbeddingKind::Ase)?.coords;
        if x.row_iter().any(|r| r.norm() == 0.0) {
            // isolated vertices have no direction
            return Ok(HsbmNode::leaf(vertices, depth));
        }
        let labels = match self.cfg.k_selector {
            KSelector::Fixed(k) => angle_cluster(&x, k.min(n), stream.named("angle"))?,
            KSelector::Bic { kmax } => {
                let projected = project_rows(&x)?;
                select_k_bic(&projected, kmax, &[CovarianceClass::Spherical], 3, stream.named("bic"))?.0.labels
            }
        };
        let r = labels.iter().max().map_or(0, |m| m + 1);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); r];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(vertices[i]);
        }
        groups.retain(|g| !g.is_empty());
        if groups.len() <= 1 {
            return Ok(HsbmNode::leaf(vertices, depth));
        }
        let d = self.cfg.sub_dim;
        let embeds: Vec<Option<DMatrix<f64>>> = groups
            .iter()
            .map(|g| {
                if g.len() < d.max(2) {
                    return Ok(None);
                }
                let h = self.graph.induced_subgraph(g);
                let mut e = embed_symmetric(h.adjacency(), d, EmbeddingKind::Ase)?.coords;
                orient_by_skewness(&mut e);
                Ok(Some(e))
            })
            .collect::<Result<_>>()?;
        let comparable: Vec<usize> = (0..groups.len()).filter(|&i| embeds[i].is_some()).collect();
        let rc = comparable.len();
        let mut s = vec![vec![0.0; rc]; rc];
        for a in 0..rc {
            for b in (a + 1)..rc {
                let v = mmd_dissimilarity(embeds[comparable[a]].as_ref().unwrap(), embeds[comparable[b]].as_ref().unwrap(), self.cfg)?;
                s[a][b] = v;
                s[b][a] = v;
            }
        }
        let mut motifs = vec![None; groups.len()];
        let mut dendrogram = Vec::new();
        if rc == 1 {
            motifs[comparable[0]] = Some(0);
        } else if rc >= 2 {
            let mut condensed = Vec::with_capacity(rc * (rc - 1) / 2);
            for a in 0..rc {
                for b in (a + 1)..rc {
                    let dist: f64 = (0..rc).map(|c| (s[a][c] - s[b][c]).powi(2)).sum::<f64>().sqrt();
                    condensed.push(dist);
                }
            }
            let dend = kodama::linkage(&mut condensed, rc, kodama::Method::Average);
            let steps = dend.steps();
            dendrogram = steps
                .iter()
                .map(|st| Merge {
                    a: st.cluster1,
                    b: st.cluster2,
                    height: st.dissimilarity,
                    size: st.size,
                })
                .collect();
            let count = motif_count(steps, rc, self.cfg.motif_cut);
            let ids = cut_dendrogram(steps, rc, rc - count);
            for (a, &id) in ids.iter().enumerate() {
                motifs[comparable[a]] = Some(id);
            }
        }
        // recurse on the largest member of each motif
        let motif_total = motifs.iter().flatten().max().map_or(0, |m| m + 1);
        let mut representative = vec![None; motif_total];
        for (i, m) in motifs.iter().enumerate() {
            if let Some(m) = *m {
                let better = representative[m].map_or(true, |j: usize| groups[i].len() > groups[j].len());
                if better {
                    representative[m] = Some(i);
                }
            }
        }
        let mut children = Vec::with_capacity(groups.len());
        for (i, g) in groups.into_iter().enumerate() {
            if representative.contains(&Some(i)) {
                children.push(self.split(g, depth + 1, d, stream.substream(i as u64))?);
            } else {
                children.push(HsbmNode::leaf(g, depth + 1));
            }
        }
        Ok(HsbmNode {
            vertices,
            depth,
            dim: Some(dim),
            children,
            motifs,
            dissimilarity: s,
            dendrogram,
            truncated: false,
        })
    }
}

/// Recursive decomposition into subgraphs and motifs of distributionally
/// equivalent subgraphs.
pub fn hsbm_decompose(g: &Graph, cfg: &HsbmConfig, stream: SeedStream) -> Result<HsbmTree> {
    if g.is_directed() {
        return Err(RdpgError::InvalidGraph("hierarchical decomposition needs an undirected graph".into()));
    }
    if cfg.top_dim == 0 || cfg.sub_dim == 0 {
        return Err(RdpgError::InvalidArgument("embedding dimensions must be positive".into()));
    }
    let comps = g.components();
    let largest_component_only = comps.len() > 1;
    let vertices = comps.into_iter().next().unwrap_or_default();
    let mut splitter = Splitter {
        graph: g,
        cfg,
        truncated: false,
    };
    let root = splitter.split(vertices, 0, cfg.top_dim, stream)?;
    Ok(HsbmTree {
        root,
        largest_component_only,
        truncated: splitter.truncated,
    })
}
