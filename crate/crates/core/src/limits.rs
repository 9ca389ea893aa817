//! Closed-form limit laws of spectral embeddings of mixture RDPGs and the
//! Chernoff-information comparison of ASE against LSE.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RdpgError, Result};
use crate::model::MixtureSpec;

/// Search interval for the Chernoff exponent t.
pub const T_LOWER: f64 = 1e-4;
pub const T_UPPER: f64 = 1.0 - 1e-4;
const GOLDEN_TOL: f64 = 1e-12;

/// First and second moments of a mixture of point masses.
#[derive(Debug, Clone)]
pub struct Moments {
    /// E[X Xᵀ]
    pub delta: DMatrix<f64>,
    /// E[X]
    pub mu: DVector<f64>,
    /// E[X Xᵀ / (Xᵀμ)]
    pub delta_tilde: DMatrix<f64>,
}

/// Per-atom limiting covariances of ASE and LSE rows.
#[derive(Debug, Clone)]
pub struct LimitLaw {
    pub moments: Moments,
    pub ase: Vec<DMatrix<f64>>,
    pub lse: Vec<DMatrix<f64>>,
}

pub fn moments(f: &MixtureSpec) -> Result<Moments> {
    let d = f.dim();
    let mut delta = DMatrix::zeros(d, d);
    let mut mu = DVector::zeros(d);
    for (k, &w) in f.weights().iter().enumerate() {
        let v = f.atom(k);
        delta += &v * v.transpose() * w;
        mu += &v * w;
    }
    let mut delta_tilde = DMatrix::zeros(d, d);
    for (k, &w) in f.weights().iter().enumerate() {
        let v = f.atom(k);
        let s = v.dot(&mu);
        if s <= 0.0 {
            return Err(RdpgError::DegenerateDenominator(format!("atom {k} has nonpositive inner product {s} with the mean")));
        }
        delta_tilde += &v * v.transpose() * (w / s);
    }
    Ok(Moments { delta, mu, delta_tilde })
}

fn inverse_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())?;
    let inv = chol.inverse();
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// ASE limiting covariance Σ(x) = Δ⁻¹ E[(xᵀX − (xᵀX)²) X Xᵀ] Δ⁻¹.
pub fn ase_limit_covariance(f: &MixtureSpec, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_point(f, x)?;
    let m = moments_ase_only(f);
    let inv = inverse_pd(&m).ok_or(RdpgError::SingularDelta)?;
    let d = f.dim();
    let mut mid = DMatrix::zeros(d, d);
    for (k, &w) in f.weights().iter().enumerate() {
        let v = f.atom(k);
        let s = x.dot(&v);
        mid += &v * v.transpose() * (w * (s - s * s));
    }
    Ok(symmetrize(&inv * mid * &inv))
}

fn moments_ase_only(f: &MixtureSpec) -> DMatrix<f64> {
    let d = f.dim();
    let mut delta = DMatrix::zeros(d, d);
    for (k, &w) in f.weights().iter().enumerate() {
        let v = f.atom(k);
        delta += &v * v.transpose() * w;
    }
    delta
}

/// LSE limiting covariance Σ̃(x).
pub fn lse_limit_covariance(f: &MixtureSpec, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_point(f, x)?;
    let m = moments(f)?;
    let xm = x.dot(&m.mu);
    if xm <= 0.0 {
        return Err(RdpgError::DegenerateDenominator(format!("xᵀμ = {xm}")));
    }
    let inv = inverse_pd(&m.delta_tilde).ok_or(RdpgError::SingularDelta)?;
    let d = f.dim();
    let mut out = DMatrix::zeros(d, d);
    let half_x = x / (2.0 * xm);
    for (k, &w) in f.weights().iter().enumerate() {
        let v = f.atom(k);
        let vm = v.dot(&m.mu);
        let s = x.dot(&v);
        let a = &inv * &v / vm - &half_x;
        out += &a * a.transpose() * (w * (s - s * s) / xm);
    }
    Ok(symmetrize(out))
}

fn check_point(f: &MixtureSpec, x: &DVector<f64>) -> Result<()> {
    if x.len() != f.dim() {
        return Err(RdpgError::DimensionMismatch(format!("point has length {}, mixture dimension {}", x.len(), f.dim())));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Limiting covariances at every atom.
pub fn limit_law(f: &MixtureSpec) -> Result<LimitLaw> {
    let moments = moments(f)?;
    let ase = (0..f.k()).map(|k| ase_limit_covariance(f, &f.atom(k))).collect::<Result<Vec<_>>>()?;
    let lse = (0..f.k()).map(|k| lse_limit_covariance(f, &f.atom(k))).collect::<Result<Vec<_>>>()?;
    Ok(LimitLaw { moments, ase, lse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chernoff {
    pub c: f64,
    pub t_star: f64,
}

/// Precomputed pieces of the Gaussian Chernoff objective.
struct ChernoffObjective {
    diff: DVector<f64>,
    s0: DMatrix<f64>,
    s1: DMatrix<f64>,
    logdet0: f64,
    logdet1: f64,
}

fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(m.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

impl ChernoffObjective {
    fn eval(&self, t: f64) -> f64 {
        let st = &self.s0 * t + &self.s1 * (1.0 - t);
        let Some(chol) = Cholesky::new(st) else {
            return f64::NEG_INFINITY;
        };
        let logdet_t = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = self.diff.dot(&chol.solve(&self.diff));
        0.5 * t * (1.0 - t) * quad + 0.5 * (logdet_t - t * self.logdet0 - (1.0 - t) * self.logdet1)
    }

    /// Derivative in t; decreasing since the objective is concave.
    fn slope(&self, t: f64) -> Option<f64> {
        let st = &self.s0 * t + &self.s1 * (1.0 - t);
        let chol = Cholesky::new(st)?;
        let dm = &self.s0 - &self.s1;
        let u = chol.solve(&self.diff);
        let trace = chol.solve(&dm).trace();
        Some(0.5 * (1.0 - 2.0 * t) * self.diff.dot(&u) - 0.5 * t * (1.0 - t) * u.dot(&(&dm * &u)) + 0.5 * (trace - self.logdet0 + self.logdet1))
    }
}

/// Bisection on the sign of the slope around an interior maximizer.
fn refine(obj: &ChernoffObjective, best: (f64, f64)) -> (f64, f64) {
    let mut lo = (best.0 - 1e-3).max(T_LOWER);
    let mut hi = (best.0 + 1e-3).min(T_UPPER);
    match (obj.slope(lo), obj.slope(hi)) {
        (Some(a), Some(b)) if a > 0.0 && b < 0.0 => {}
        _ => return best,
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match obj.slope(mid) {
            Some(v) if v > 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => return best,
        }
    }
    let t = 0.5 * (lo + hi);
    let v = obj.eval(t);
    if v >= best.1 - 1e-14 * best.1.abs().max(1.0) {
        (t, v.max(best.1))
    } else {
        best
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Chernoff information between N(μ0, Σ0) and N(μ1, Σ1), Σ_t = tΣ0 + (1−t)Σ1.
pub fn chernoff_gaussians(mu0: &DVector<f64>, s0: &DMatrix<f64>, mu1: &DVector<f64>, s1: &DMatrix<f64>) -> Result<Chernoff> {
    let d = mu0.len();
    if mu1.len() != d || s0.shape() != (d, d) || s1.shape() != (d, d) {
        return Err(RdpgError::DimensionMismatch("Gaussian parameters disagree in dimension".into()));
    }
    let logdet0 = log_det_pd(s0).ok_or_else(|| RdpgError::NotPositiveDefinite("Σ0".into()))?;
    let logdet1 = log_det_pd(s1).ok_or_else(|| RdpgError::NotPositiveDefinite("Σ1".into()))?;
    let obj = ChernoffObjective {
        diff: mu1 - mu0,
        s0: s0.clone(),
        s1: s1.clone(),
        logdet0,
        logdet1,
    };
    Ok(maximize(&obj))
}

fn maximize(obj: &ChernoffObjective) -> Chernoff {
    let f = &|t| obj.eval(t);
    let mut best = golden_max(f, T_LOWER, T_UPPER);
    for start in [0.25, 0.5, 0.75] {
        let cand = golden_max(f, (start - 0.25f64).max(T_LOWER), (start + 0.25f64).min(T_UPPER));
        if cand.1 > best.1 {
            best = cand;
        }
    }
    // optimum pinned at an end of the interval: keep searching toward the boundary
    if best.0 - T_LOWER < 1e-9 {
        let cand = golden_max(f, 1e-12, T_LOWER);
        if cand.1 > best.1 {
            best = cand;
        }
    } else if T_UPPER - best.0 < 1e-9 {
        let cand = golden_max(f, T_UPPER, 1.0 - 1e-12);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best = refine(obj, best);
    Chernoff {
        c: best.1.max(0.0),
        t_star: best.0,
    }
}

/// ASE and LSE Chernoff exponents for block recovery at sample size n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub rho_a: f64,
    pub rho_l: f64,
    pub ratio: f64,
    pub t_star_a: f64,
    pub t_star_l: f64,
    /// Pair of atoms attaining each minimum.
    pub pair_a: (usize, usize),
    pub pair_l: (usize, usize),
}

/// Atoms rescaled as ν_k / (Σ_k' π_k' ν_kᵀν_k')^{1/2}.
pub fn lse_centers(f: &MixtureSpec) -> Vec<DVector<f64>> {
    let m = moments_mu(f);
    (0..f.k())
        .map(|k| {
            let v = f.atom(k);
            let s = v.dot(&m);
            v / s.sqrt()
        })
        .collect()
}

fn moments_mu(f: &MixtureSpec) -> DVector<f64> {
    let mut mu = DVector::zeros(f.dim());
    for (k, &w) in f.weights().iter().enumerate() {
        mu += f.atom(k) * w;
    }
    mu
}

fn min_pairwise(centers: &[DVector<f64>], covs: &[DMatrix<f64>], n: f64) -> Result<(Chernoff, (usize, usize))> {
    let scale = n.sqrt();
    let mut best: Option<(Chernoff, (usize, usize))> = None;
    for k in 0..centers.len() {
        for l in (k + 1)..centers.len() {
            let c = chernoff_gaussians(&(&centers[k] * scale), &covs[k], &(&centers[l] * scale), &covs[l])?;
            if best.map_or(true, |b| c.c < b.0.c) {
                best = Some((c, (k, l)));
            }
        }
    }
    best.ok_or_else(|| RdpgError::InvalidModel("need at least two atoms".into()))
}

pub fn rho_pair(f: &MixtureSpec, n: f64) -> Result<RhoReport> {
    if f.k() < 2 {
        return Err(RdpgError::InvalidModel("need at least two atoms".into()));
    }
    let law = limit_law(f)?;
    let atoms: Vec<DVector<f64>> = (0..f.k()).map(|k| f.atom(k)).collect();
    let (a, pair_a) = min_pairwise(&atoms, &law.ase, n)?;
    let (l, pair_l) = min_pairwise(&lse_centers(f), &law.lse, n)?;
    Ok(RhoReport {
        rho_a: a.c,
        rho_l: l.c,
        ratio: a.c / l.c,
        t_star_a: a.t_star,
        t_star_l: l.t_star,
        pair_a,
        pair_l,
    })
}

/// Parametric SBM families indexed by (p, r) with q = p + r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SurfaceFamily {
    /// B = [[p², pq], [pq, q²]], latent positions p and q in one dimension.
    TwoBlockRank1 { weights: [f64; 2] },
    /// B = pI + q(J − I) on three blocks.
    ThreeBlockPQ { weights: [f64; 3] },
}

impl SurfaceFamily {
    pub fn mixture(&self, p: f64, r: f64) -> Result<MixtureSpec> {
        let q = p + r;
        match self {
            SurfaceFamily::TwoBlockRank1 { weights } => {
                MixtureSpec::new(weights.to_vec(), DMatrix::from_column_slice(2, 1, &[p, q]))
            }
            SurfaceFamily::ThreeBlockPQ { weights } => {
                let b = DMatrix::from_fn(3, 3, |i, j| if i == j { p } else { q });
                MixtureSpec::from_block_matrix(&b, weights.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub p: f64,
    pub r: f64,
    pub rho_a: Option<f64>,
    pub rho_l: Option<f64>,
    pub ratio: Option<f64>,
    /// "ok" or the error kind for cells whose parameters are invalid.
    pub status: String,
}

/// Evaluates ρ_A/ρ_L on the grid, cells in row-major (p outer, r inner) order.
pub fn ratio_surface(family: &SurfaceFamily, p_values: &[f64], r_values: &[f64], n: f64) -> Vec<SurfaceCell> {
    let grid: Vec<(f64, f64)> = p_values.iter().flat_map(|&p| r_values.iter().map(move |&r| (p, r))).collect();
    grid.par_iter()
        .map(|&(p, r)| match family.mixture(p, r).and_then(|f| rho_pair(&f, n)) {
            Ok(rep) => SurfaceCell {
                p,
                r,
                rho_a: Some(rep.rho_a),
                rho_l: Some(rep.rho_l),
                ratio: Some(rep.ratio),
                status: "ok".into(),
            },
            Err(e) => SurfaceCell {
                p,
                r,
                rho_a: None,
                rho_l: None,
                ratio: None,
                status: e.kind().to_string(),
            },
        })
        .collect()
}

/// Writes the surface as CSV with header p,r,rho_A,rho_L,ratio,status.
pub fn write_surface_csv<W: std::io::Write>(cells: &[SurfaceCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "p,r,rho_A,rho_L,ratio,status")?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for c in cells {
        writeln!(out, "{},{},{},{},{},{}", c.p, c.r, fmt(c.rho_a), fmt(c.rho_l), fmt(c.ratio), c.status)?;
    }
    Ok(())
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
