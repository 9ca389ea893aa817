//! Adjacency, Laplacian, directed and omnibus spectral embeddings, plus
//! embedding-dimension selection from a scree of singular values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RdpgError, Result};
use crate::graph::{augment_diagonal, Graph, SparsityStats};
use crate::spectral::{svd_topk, sym_eigen_topk, SpectralPairs};

/// Eigenvalues with |λ| at or below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Default USVT factor, applied to √n.
pub const USVT_DEFAULT_FACTOR: f64 = 0.7 * 2.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "ASE")]
    Ase,
    #[serde(rename = "LSE")]
    Lse,
    #[serde(rename = "DirectedASE")]
    DirectedAse,
    #[serde(rename = "Omnibus")]
    Omnibus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingFlags {
    /// Fewer than d nonzero eigen/singular values; trailing columns are zero.
    pub rank_deficient: bool,
    pub padded_columns: usize,
    /// A retained eigenvalue was negative.
    pub indefinite: bool,
    pub diagonal_augmented: bool,
}

/// Row layout of an omnibus embedding: row n·s + i is graph s's estimate for vertex i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmnibusBlocks {
    pub graphs: usize,
    pub vertices: usize,
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
    /// Retained eigenvalues (signed) or singular values.
    pub spectrum: Vec<f64>,
    pub kind: EmbeddingKind,
    pub d: usize,
    pub flags: EmbeddingFlags,
    pub blocks: Option<OmnibusBlocks>,
}

impl Embedding {
    /// Rows belonging to graph `s` of an omnibus embedding.
    pub fn omnibus_block(&self, s: usize) -> Option<DMatrix<f64>> {
        let b = self.blocks?;
        if s >= b.graphs {
            return None;
        }
        Some(self.coords.rows(s * b.vertices, b.vertices).into_owned())
    }

    /// Out-vectors (first d columns) of a directed embedding.
    pub fn out_vectors(&self) -> DMatrix<f64> {
        self.coords.columns(0, self.d).into_owned()
    }

    /// In-vectors (last d columns) of a directed embedding.
    pub fn in_vectors(&self) -> Option<DMatrix<f64>> {
        (self.kind == EmbeddingKind::DirectedAse).then(|| self.coords.columns(self.d, self.d).into_owned())
    }
}

fn check_dim(n: usize, d: usize) -> Result<()> {
    if d == 0 || d > n {
        return Err(RdpgError::InvalidArgument(format!("need 1 <= d <= n={n}, got d={d}")));
    }
    Ok(())
}

/// Spectral embedding U·|S|^{1/2} of a symmetric matrix, pairs chosen by |λ|.
pub fn embed_symmetric(h: &DMatrix<f64>, d: usize, kind: EmbeddingKind) -> Result<Embedding> {
    check_dim(h.nrows(), d)?;
    let pairs = sym_eigen_topk(h, d)?;
    Ok(embedding_from_pairs(pairs, d, kind))
}

fn embedding_from_pairs(pairs: SpectralPairs, d: usize, kind: EmbeddingKind) -> Embedding {
    let top = pairs.values[0].abs();
    let mut coords = pairs.vectors.columns(0, d).into_owned();
    let mut flags = EmbeddingFlags::default();
    for (j, &lam) in pairs.values.iter().take(d).enumerate() {
        if lam.abs() <= RANK_TOLERANCE * top || top == 0.0 {
            coords.column_mut(j).fill(0.0);
            flags.rank_deficient = true;
            flags.padded_columns += 1;
        } else {
            coords.column_mut(j).scale_mut(lam.abs().sqrt());
            if lam < 0.0 {
                flags.indefinite = true;
            }
        }
    }
    Embedding {
        coords,
        spectrum: pairs.values[..d].to_vec(),
        kind,
        d,
        flags,
        blocks: None,
    }
}

/// ASE of a nonnegative symmetric matrix together with δ and γ, from one
/// partial eigendecomposition of d + 1 pairs.
pub fn ase_with_sparsity(h: &DMatrix<f64>, d: usize) -> Result<(Embedding, SparsityStats)> {
    let n = h.nrows();
    if d == 0 || d >= n {
        return Err(RdpgError::DimensionMismatch(format!("need 1 <= d < n={n}, got d={d}")));
    }
    let delta = h.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    if delta <= 0.0 {
        return Err(RdpgError::DivisionByZeroDelta);
    }
    let pairs = sym_eigen_topk(h, d + 1)?;
    let gamma = (pairs.values[d - 1].abs() - pairs.values[d].abs()) / delta;
    Ok((embedding_from_pairs(pairs, d, EmbeddingKind::Ase), SparsityStats { delta, gamma, d }))
}

/// Adjacency spectral embedding.
pub fn ase(g: &Graph, d: usize, diag_augment: bool) -> Result<Embedding> {
    if g.is_directed() {
        return Err(RdpgError::InvalidGraph("ase needs an undirected graph; use directed_ase".into()));
    }
    let mut emb = if diag_augment {
        let aug = augment_diagonal(g)?;
        embed_symmetric(aug.adjacency(), d, EmbeddingKind::Ase)?
    } else {
        embed_symmetric(g.adjacency(), d, EmbeddingKind::Ase)?
    };
    emb.flags.diagonal_augmented = diag_augment;
    Ok(emb)
}

/// D^{-1/2}·H·D^{-1/2} with D the row sums of H.
pub fn normalized_laplacian(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let deg: Vec<f64> = h.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = deg.iter().position(|&v| v <= 0.0) {
        return Err(RdpgError::IsolatedVertex(i));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| h[(i, j)] * inv_sqrt[i] * inv_sqrt[j]))
}

/// Laplacian spectral embedding: ASE of the normalized Laplacian.
pub fn lse(g: &Graph, d: usize) -> Result<Embedding> {
    if g.is_directed() {
        return Err(RdpgError::InvalidGraph("lse needs an undirected graph".into()));
    }
    lse_matrix(g.adjacency(), d)
}

/// LSE of an arbitrary nonnegative symmetric matrix (e.g. an exact P, in
/// which case the degrees are the expected degrees).
pub fn lse_matrix(h: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    check_dim(h.nrows(), d)?;
    let l = normalized_laplacian(h)?;
    embed_symmetric(&l, d, EmbeddingKind::Lse)
}

/// Directed ASE: [U·S^{1/2} | V·S^{1/2}] from the rank-d SVD, out-vectors first.
pub fn directed_ase(g: &Graph, d: usize) -> Result<Embedding> {
    let a = g.adjacency();
    let n = a.nrows();
    check_dim(n, d)?;
    let svd = svd_topk(a, d)?;
    let top = svd.singular_values[0];
    let mut coords = DMatrix::zeros(n, 2 * d);
    let mut flags = EmbeddingFlags::default();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s <= RANK_TOLERANCE * top || top == 0.0 {
            flags.rank_deficient = true;
            flags.padded_columns += 1;
            continue;
        }
        let r = s.sqrt();
        coords.set_column(j, &(svd.u.column(j) * r));
        coords.set_column(d + j, &(svd.v.column(j) * r));
    }
    Ok(Embedding {
        coords,
        spectrum: svd.singular_values,
        kind: EmbeddingKind::DirectedAse,
        d,
        flags,
        blocks: None,
    })
}

/// The mn×mn omnibus matrix with block (s, t) = (A_s + A_t)/2.
pub fn omnibus_matrix(graphs: &[Graph]) -> Result<DMatrix<f64>> {
    let first = graphs.first().ok_or(RdpgError::EmptyInput)?;
    let n = first.n();
    for (s, g) in graphs.iter().enumerate() {
        if g.n() != n {
            return Err(RdpgError::DimensionMismatch(format!("graph {s} has {} vertices, expected {n}", g.n())));
        }
        if g.is_directed() {
            return Err(RdpgError::InvalidGraph(format!("graph {s} is directed")));
        }
    }
    let m = graphs.len();
    let mut big = DMatrix::zeros(m * n, m * n);
    for s in 0..m {
        for t in 0..m {
            let a = graphs[s].adjacency();
            let b = graphs[t].adjacency();
            let mut block = big.view_mut((s * n, t * n), (n, n));
            if s == t {
                block.copy_from(a);
            } else {
                block.copy_from(&((a + b) * 0.5));
            }
        }
    }
    Ok(big)
}

/// ASE of the omnibus matrix.
pub fn omni_embed(graphs: &[Graph], d: usize) -> Result<Embedding> {
    let m = omnibus_matrix(graphs)?;
    let mut emb = embed_symmetric(&m, d, EmbeddingKind::Omnibus)?;
    emb.blocks = Some(OmnibusBlocks {
        graphs: graphs.len(),
        vertices: graphs[0].n(),
    });
    Ok(emb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimensionMethod {
    /// Two-group Gaussian profile likelihood over every split of the scree.
    ProfileLikelihood,
    /// Count of singular values at least factor·√n.
    Usvt { factor: f64, n: usize },
}

/// Profile log-likelihood of splitting the scree after position q (1-based),
/// +∞ when both groups are constant.
pub fn profile_log_likelihood(values: &[f64], q: usize) -> f64 {
    let len = values.len() as f64;
    let (a, b) = values.split_at(q);
    let ss = |g: &[f64]| {
        if g.is_empty() {
            return 0.0;
        }
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
    };
    let var = (ss(a) + ss(b)) / len;
    if var <= 0.0 {
        return f64::INFINITY;
    }
    -0.5 * len * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * len
}

/// Chooses an embedding dimension from a nonincreasing list of singular values.
///
/// Profile likelihood returns 1 for a single value and, among equally
/// likely splits, the smallest. USVT never returns less than 1.
pub fn select_dimension(values: &[f64], method: DimensionMethod) -> Result<usize> {
    if values.is_empty() {
        return Err(RdpgError::EmptyInput);
    }
    if values.iter().any(|&v| !(v >= 0.0)) || values.windows(2).any(|w| w[1] > w[0]) {
        return Err(RdpgError::InvalidArgument("singular values must be nonnegative and nonincreasing".into()));
    }
    match method {
        DimensionMethod::ProfileLikelihood => {
            let mut best = 1;
            let mut best_ll = f64::NEG_INFINITY;
            for q in 1..values.len() {
                let ll = profile_log_likelihood(values, q);
                if ll > best_ll {
                    best = q;
                    best_ll = ll;
                }
            }
            Ok(best)
        }
        DimensionMethod::Usvt { factor, n } => {
            if !(factor > 0.0) {
                return Err(RdpgError::InvalidArgument(format!("USVT factor must be positive, got {factor}")));
            }
            let threshold = factor * (n as f64).sqrt();
            Ok(values.iter().filter(|&&s| s >= threshold).count().max(1))
        }
    }
}
