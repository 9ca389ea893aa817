//! Truncated symmetric eigendecomposition, truncated SVD and orthogonal
//! Procrustes alignment.
//!
//! Small problems go straight to nalgebra's dense solvers. Larger ones use
//! a Lanczos iteration with full reorthogonalization; every pair it returns
//! is checked against the operator and the dense path is used whenever the
//! check fails.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{RdpgError, Result};

/// Problems up to this size are decomposed densely.
pub const DENSE_CUTOFF: usize = 64;

const LANCZOS_RITZ_TOL: f64 = 1e-11;
const VERIFY_TOL: f64 = 1e-8;
const START_SEED: u64 = 0x5EED_1A2C_0F_u64;

/// Leading eigenpairs of a symmetric matrix, ordered by magnitude.
#[derive(Debug, Clone)]
pub struct SpectralPairs {
    pub values: Vec<f64>,
    /// n×k, orthonormal columns.
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ProcrustesResult {
    /// Orthogonal d×d matrix minimizing ‖X·W − Y‖_F.
    pub rotation: DMatrix<f64>,
    pub distance: f64,
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(RdpgError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = h.amax().max(1.0);
    let n = h.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-9 * scale {
                return Err(RdpgError::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Index of the entry with largest magnitude; lowest index wins ties.
fn dominant_index(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        // Treat entries within rounding of each other as tied.
        if x.abs() > best_abs * (1.0 + 1e-12) + 1e-300 {
            best = i;
            best_abs = x.abs();
        }
    }
    best
}

/// Sorts pairs by |λ| descending (ties: signed value descending, then the
/// lowest dominant index) and flips each vector so its dominant entry is
/// positive.
fn canonicalize(values: Vec<f64>, vectors: DMatrix<f64>) -> SpectralPairs {
    let k = values.len();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut cols: Vec<(f64, DVector<f64>, usize)> = (0..k)
        .map(|j| {
            let mut col = vectors.column(j).into_owned();
            let idx = dominant_index(col.as_slice());
            if col[idx] < 0.0 {
                col.neg_mut();
            }
            (values[j], col, idx)
        })
        .collect();
    let tie = 1e-12 * scale;
    cols.sort_by(|a, b| {
        let (ma, mb) = (a.0.abs(), b.0.abs());
        if (ma - mb).abs() > tie {
            return mb.partial_cmp(&ma).unwrap();
        }
        if (a.0 - b.0).abs() > tie {
            return b.0.partial_cmp(&a.0).unwrap();
        }
        a.2.cmp(&b.2)
    });
    let n = vectors.nrows();
    let mut out = DMatrix::zeros(n, k);
    let mut vals = Vec::with_capacity(k);
    for (j, (val, col, _)) in cols.into_iter().enumerate() {
        out.set_column(j, &col);
        vals.push(val);
    }
    SpectralPairs {
        values: vals,
        vectors: out,
    }
}

fn dense_topk(h: &DMatrix<f64>, k: usize) -> Result<SpectralPairs> {
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
        .ok_or_else(|| RdpgError::ConvergenceFailure("dense symmetric eigensolver".into()))?;
    let all = canonicalize(eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors);
    Ok(SpectralPairs {
        values: all.values[..k].to_vec(),
        vectors: all.vectors.columns(0, k).into_owned(),
    })
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        orthogonalize(&mut v, basis);
        orthogonalize(&mut v, basis);
        let norm = v.norm();
        if norm > 1e-8 {
            return Some(v / norm);
        }
    }
    None
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for q in basis {
        let c = q.dot(v);
        v.axpy(-c, q, 1.0);
    }
}

/// Lanczos with full reorthogonalization for the `k` eigenpairs of largest
/// magnitude of the symmetric operator `apply` of dimension `n`.
///
/// Returns `None` when the Ritz pairs do not converge before the Krylov
/// basis fills the whole space, so the caller can fall back to a dense solve.
fn lanczos_topk<F>(n: usize, k: usize, apply: F) -> Option<(Vec<f64>, DMatrix<f64>)>
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED ^ n as u64);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_unit(n, &mut rng, &basis)?;
    let mut w = DVector::zeros(n);
    let mut checkpoint = n.min((2 * k + 24).max(40));
    let mut scale = 0.0_f64;

    loop {
        apply(&q, &mut w);
        let a = q.dot(&w);
        basis.push(q.clone());
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, &basis);
        let b = w.norm();
        let m = basis.len();
        scale = scale.max(a.abs()).max(b);

        if m >= checkpoint || m == n {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::try_new(t, f64::EPSILON, 0)?;
            let ritz = canonicalize(eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors);
            let norm_est = ritz.values.first().map(|v| v.abs()).unwrap_or(0.0).max(scale * 1e-3);
            let kk = k.min(m);
            let converged = m == n
                || (0..kk).all(|j| (b * ritz.vectors[(m - 1, j)]).abs() <= LANCZOS_RITZ_TOL * norm_est.max(1e-300));
            if converged && kk == k {
                let mut vecs = DMatrix::zeros(n, k);
                for j in 0..k {
                    let mut col = DVector::zeros(n);
                    for (i, qi) in basis.iter().enumerate() {
                        col.axpy(ritz.vectors[(i, j)], qi, 1.0);
                    }
                    vecs.set_column(j, &col);
                }
                return Some((ritz.values[..k].to_vec(), vecs));
            }
            if m == n {
                return None;
            }
            checkpoint = n.min(checkpoint + (checkpoint / 2).max(20));
        }

        if b <= 1e-12 * scale.max(1e-300) || b == 0.0 {
            // Invariant subspace: continue from a fresh direction.
            beta.push(0.0);
            q = random_unit(n, &mut rng, &basis)?;
        } else {
            beta.push(b);
            q = &w / b;
        }
    }
}

fn verify_pairs<F>(values: &[f64], vectors: &DMatrix<f64>, norm: f64, apply: F) -> bool
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let n = vectors.nrows();
    let mut w = DVector::zeros(n);
    for (j, &lam) in values.iter().enumerate() {
        let v = vectors.column(j).into_owned();
        apply(&v, &mut w);
        w.axpy(-lam, &v, 1.0);
        if w.norm() > VERIFY_TOL * norm.max(1e-300) {
            return false;
        }
    }
    let gram = vectors.transpose() * vectors;
    let k = values.len();
    (0..k).all(|i| (0..k).all(|j| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9))
}

/// The `k` eigenpairs of largest |λ| of a symmetric matrix.
///
/// Values are sorted by magnitude, ties broken by signed value (descending)
/// and then by the lowest index of each vector's largest-magnitude entry.
/// Every vector has its largest-magnitude entry positive.
pub fn sym_eigen_topk(h: &DMatrix<f64>, k: usize) -> Result<SpectralPairs> {
    check_symmetric(h)?;
    let n = h.nrows();
    if k == 0 || k > n {
        return Err(RdpgError::InvalidArgument(format!("need 1 <= k <= {n}, got k={k}")));
    }
    if n <= DENSE_CUTOFF || 3 * k > n {
        return dense_topk(h, k);
    }
    let fro = h.norm();
    if fro == 0.0 {
        return dense_zero(n, k);
    }
    let apply = |x: &DVector<f64>, y: &mut DVector<f64>| y.gemv(1.0, h, x, 0.0);
    if let Some((values, vectors)) = lanczos_topk(n, k, apply) {
        let norm = values[0].abs();
        if verify_pairs(&values, &vectors, norm, apply) {
            return Ok(canonicalize(values, vectors));
        }
    }
    dense_topk(h, k)
}

fn dense_zero(n: usize, k: usize) -> Result<SpectralPairs> {
    let mut vectors = DMatrix::zeros(n, k);
    for j in 0..k {
        vectors[(j, j)] = 1.0;
    }
    Ok(SpectralPairs {
        values: vec![0.0; k],
        vectors,
    })
}

/// Singular values of a symmetric matrix, descending, the first `k` of them.
pub fn symmetric_singular_values(h: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let pairs = sym_eigen_topk(h, k)?;
    let mut s: Vec<f64> = pairs.values.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(s)
}

/// Rank-`k` truncated SVD, singular values descending.
///
/// Each left singular vector has its largest-magnitude entry positive; the
/// paired right vector is flipped with it.
pub fn svd_topk(h: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, m) = h.shape();
    let r = n.min(m);
    if k == 0 || k > r {
        return Err(RdpgError::InvalidArgument(format!("need 1 <= k <= {r}, got k={k}")));
    }
    if r <= DENSE_CUTOFF || 3 * k > r {
        return dense_svd_topk(h, k);
    }
    // Work on the Gram operator of the smaller side.
    let left = n <= m;
    let dim = if left { n } else { m };
    let ht = h.transpose();
    let apply = |x: &DVector<f64>, y: &mut DVector<f64>| {
        if left {
            let t = &ht * x;
            y.gemv(1.0, h, &t, 0.0);
        } else {
            let t = h * x;
            y.gemv(1.0, &ht, &t, 0.0);
        }
    };
    let gram = match lanczos_topk(dim, k, apply) {
        Some((vals, vecs)) if verify_pairs(&vals, &vecs, vals[0].abs(), apply) => canonicalize(vals, vecs),
        _ => return dense_svd_topk(h, k),
    };
    let s: Vec<f64> = gram.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let small = gram.vectors;
    let other = if left { &ht * &small } else { h * &small };
    let other_dim = if left { m } else { n };
    let mut completed = DMatrix::zeros(other_dim, k);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..k {
        let mut col = if s[j] > 1e-12 * s[0].max(1e-300) {
            other.column(j) / s[j]
        } else {
            random_unit(other_dim, &mut rng, &basis).unwrap_or_else(|| DVector::zeros(other_dim))
        };
        orthogonalize(&mut col, &basis);
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= nrm;
        }
        basis.push(col.clone());
        completed.set_column(j, &col);
    }
    let (u, v) = if left { (small, completed) } else { (completed, small) };
    Ok(orient_svd(u, s, v))
}

fn orient_svd(mut u: DMatrix<f64>, s: Vec<f64>, mut v: DMatrix<f64>) -> TruncatedSvd {
    for j in 0..s.len() {
        let idx = dominant_index(u.column(j).as_slice());
        if u[(idx, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    TruncatedSvd {
        u,
        singular_values: s,
        v,
    }
}

fn dense_svd_topk(h: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let svd = nalgebra::linalg::SVD::try_new(h.clone(), true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| RdpgError::ConvergenceFailure("dense SVD".into()))?;
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let (n, m) = h.shape();
    let mut u = DMatrix::zeros(n, k);
    let mut v = DMatrix::zeros(m, k);
    let mut s = Vec::with_capacity(k);
    for (j, &o) in order.iter().take(k).enumerate() {
        u.set_column(j, &u_full.column(o));
        v.set_column(j, &vt_full.row(o).transpose());
        s.push(svd.singular_values[o]);
    }
    Ok(orient_svd(u, s, v))
}

/// Orthogonal Procrustes: the W ∈ O(d) minimizing ‖X·W − Y‖_F.
///
/// W = U·Vᵀ from the SVD of XᵀY; reflections are allowed.
pub fn procrustes_align(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesResult> {
    if x.shape() != y.shape() {
        return Err(RdpgError::DimensionMismatch(format!(
            "procrustes inputs {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let cross = x.transpose() * y;
    let svd = nalgebra::linalg::SVD::try_new(cross, true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| RdpgError::ConvergenceFailure("procrustes SVD".into()))?;
    let rotation = svd.u.expect("requested U") * svd.v_t.expect("requested V^T");
    let distance = (x * &rotation - y).norm();
    Ok(ProcrustesResult { rotation, distance })
}

/// Largest row Euclidean norm (the 2→∞ norm).
pub fn two_to_infinity(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}
