//! Graphs, probability matrices, Bernoulli sampling and the sparsity
//! functionals δ(H) and γ(H).

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RdpgError, Result};
use crate::rng::SeedStream;
use crate::spectral::symmetric_singular_values;

/// Entries of P may exceed [0, 1] by this much before it is an error.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Dense adjacency matrix with its structural flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: DMatrix<f64>,
    directed: bool,
    hollow: bool,
    weighted: bool,
}

impl Graph {
    /// Validates `adj` and derives the hollow and weighted flags from it.
    pub fn new(adj: DMatrix<f64>, directed: bool) -> Result<Self> {
        let (n, m) = adj.shape();
        if n != m {
            return Err(RdpgError::DimensionMismatch(format!("adjacency is {n}x{m}")));
        }
        let mut weighted = false;
        for j in 0..n {
            for i in 0..n {
                let v = adj[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(RdpgError::InvalidGraph(format!("entry ({i}, {j}) = {v}")));
                }
                if v != 0.0 && v != 1.0 {
                    weighted = true;
                }
                if !directed && i > j && adj[(i, j)] != adj[(j, i)] {
                    return Err(RdpgError::InvalidGraph(format!(
                        "undirected adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let hollow = (0..n).all(|i| adj[(i, i)] == 0.0);
        Ok(Self {
            adj,
            directed,
            hollow,
            weighted,
        })
    }

    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            adj: DMatrix::zeros(n, n),
            directed,
            hollow: true,
            weighted: false,
        }
    }

    /// Builds a graph from `(i, j, w)` triples. Undirected edges are mirrored.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], directed: bool) -> Result<Self> {
        let mut adj = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(RdpgError::InvalidGraph(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            adj[(i, j)] = w;
            if !directed {
                adj[(j, i)] = w;
            }
        }
        Self::new(adj, directed)
    }

    pub fn n(&self) -> usize {
        self.adj.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adj
    }

    pub fn into_adjacency(self) -> DMatrix<f64> {
        self.adj
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_hollow(&self) -> bool {
        self.hollow
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Off-diagonal row sums.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.adj.row(i).sum() - self.adj[(i, i)])
            .collect()
    }

    /// Edges as `(i, j, w)`, each undirected edge once with `i <= j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            let start = if self.directed { 0 } else { i };
            for j in start..n {
                let w = self.adj[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn induced_subgraph(&self, vertices: &[usize]) -> Graph {
        let k = vertices.len();
        let adj = DMatrix::from_fn(k, k, |a, b| self.adj[(vertices[a], vertices[b])]);
        Graph::new(adj, self.directed).expect("subgraph of a valid graph is valid")
    }

    /// Weakly connected components, each sorted, largest first.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if !seen[v] && (self.adj[(u, v)] != 0.0 || self.adj[(v, u)] != 0.0) {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }
}

/// Edge probability matrix with entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(DMatrix<f64>);

impl ProbabilityMatrix {
    /// Entries within [`PROBABILITY_TOLERANCE`] of [0, 1] are clamped; anything
    /// further out is rejected.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let (n, m) = p.shape();
        if n != m {
            return Err(RdpgError::DimensionMismatch(format!("probability matrix is {n}x{m}")));
        }
        let mut p = p;
        for j in 0..n {
            for i in 0..n {
                let v = p[(i, j)];
                if !(v >= -PROBABILITY_TOLERANCE && v <= 1.0 + PROBABILITY_TOLERANCE) {
                    return Err(RdpgError::ProbabilityOutOfRange { row: i, col: j, value: v });
                }
                p[(i, j)] = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self(p))
    }

    /// P = X·Xᵀ. Out-of-range inner products mean the positions are not a
    /// valid RDPG and are reported as an invalid model.
    pub fn from_positions(x: &DMatrix<f64>) -> Result<Self> {
        let p = x * x.transpose();
        Self::new(p).map_err(|e| match e {
            RdpgError::ProbabilityOutOfRange { row, col, value } => RdpgError::InvalidModel(format!(
                "inner product of latent positions {row} and {col} is {value}"
            )),
            other => other,
        })
    }

    /// Clamps every entry to [0, 1]; used for plug-in estimates such as X̂·X̂ᵀ.
    pub fn clipped(p: DMatrix<f64>) -> Self {
        Self(p.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Independent Bernoulli(P_ij) edges.
///
/// Undirected graphs draw the upper triangle row by row and mirror it;
/// directed graphs draw every ordered pair. Hollow graphs skip the diagonal.
pub fn sample_adjacency(p: &ProbabilityMatrix, stream: SeedStream, directed: bool, hollow: bool) -> Result<Graph> {
    let pm = p.matrix();
    let n = p.n();
    if !directed {
        for j in 0..n {
            for i in (j + 1)..n {
                if (pm[(i, j)] - pm[(j, i)]).abs() > PROBABILITY_TOLERANCE {
                    return Err(RdpgError::InvalidArgument(
                        "undirected sampling needs a symmetric probability matrix".into(),
                    ));
                }
            }
        }
    }
    Ok(sample_with(n, stream, directed, hollow, |i, j| pm[(i, j)]))
}

/// Samples an RDPG directly from latent positions without materializing P.
pub fn sample_from_positions(x: &DMatrix<f64>, stream: SeedStream, directed: bool, hollow: bool) -> Result<Graph> {
    let n = x.nrows();
    let xt = x.transpose();
    let mut bad = None;
    let g = sample_with(n, stream, directed, hollow, |i, j| {
        let v = xt.column(i).dot(&xt.column(j));
        if !(v >= -PROBABILITY_TOLERANCE && v <= 1.0 + PROBABILITY_TOLERANCE) && bad.is_none() {
            bad = Some((i, j, v));
        }
        v.clamp(0.0, 1.0)
    });
    match bad {
        Some((i, j, v)) => Err(RdpgError::InvalidModel(format!(
            "inner product of latent positions {i} and {j} is {v}"
        ))),
        None => Ok(g),
    }
}

fn sample_with<F>(n: usize, stream: SeedStream, directed: bool, hollow: bool, mut prob: F) -> Graph
where
    F: FnMut(usize, usize) -> f64,
{
    let mut rng = stream.rng();
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        let start = if directed { 0 } else { i };
        for j in start..n {
            if hollow && i == j {
                continue;
            }
            if rng.gen::<f64>() < prob(i, j) {
                adj[(i, j)] = 1.0;
                if !directed {
                    adj[(j, i)] = 1.0;
                }
            }
        }
    }
    let hollow_actual = (0..n).all(|i| adj[(i, i)] == 0.0);
    Graph {
        adj,
        directed,
        hollow: hollow_actual,
        weighted: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Max row sum.
    pub delta: f64,
    /// (σ_d − σ_{d+1}) / δ.
    pub gamma: f64,
    pub d: usize,
}

/// δ(H) and γ(H) for a nonnegative symmetric matrix.
pub fn sparsity_stats(h: &DMatrix<f64>, d: usize) -> Result<SparsityStats> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(RdpgError::DimensionMismatch(format!("H is {}x{}", n, h.ncols())));
    }
    if d == 0 || d >= n {
        return Err(RdpgError::DimensionMismatch(format!("need 1 <= d < n={n}, got d={d}")));
    }
    if h.iter().any(|&v| v < 0.0) {
        return Err(RdpgError::InvalidArgument("H must be entrywise nonnegative".into()));
    }
    let delta = h.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    if delta == 0.0 {
        return Err(RdpgError::DivisionByZeroDelta);
    }
    let s = symmetric_singular_values(h, d + 1)?;
    Ok(SparsityStats {
        delta,
        gamma: (s[d - 1] - s[d]) / delta,
        d,
    })
}

/// Sets A_ii = deg_i / (n + 1).
pub fn augment_diagonal(g: &Graph) -> Result<Graph> {
    if g.is_directed() {
        return Err(RdpgError::InvalidGraph("diagonal augmentation needs an undirected graph".into()));
    }
    let n = g.n();
    let deg = g.degrees();
    let mut adj = g.adjacency().clone();
    for i in 0..n {
        adj[(i, i)] = deg[i] / (n as f64 + 1.0);
    }
    let weighted = g.is_weighted() || deg.iter().any(|&d| d != 0.0);
    let hollow = (0..n).all(|i| adj[(i, i)] == 0.0);
    Ok(Graph {
        adj,
        directed: false,
        hollow,
        weighted,
    })
}
