//! Latent position models and their realization as (X, P).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Dirichlet, Distribution, WeightedIndex};

use crate::error::{RdpgError, Result};
use crate::graph::{ProbabilityMatrix, PROBABILITY_TOLERANCE};
use crate::rng::SeedStream;

/// A finite mixture of point masses: weights π over distinct atoms ν (K×d).
///
/// All pairwise inner products of atoms lie in [0, 1], so the mixture is an
/// inner product distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    atoms: DMatrix<f64>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, atoms: DMatrix<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(RdpgError::InvalidModel("mixture needs at least one atom".into()));
        }
        if atoms.nrows() != k || atoms.ncols() == 0 {
            return Err(RdpgError::DimensionMismatch(format!(
                "{} weights but atoms are {}x{}",
                k,
                atoms.nrows(),
                atoms.ncols()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(RdpgError::InvalidModel("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(RdpgError::InvalidModel(format!("mixture weights sum to {total}")));
        }
        for a in 0..k {
            for b in a..k {
                let ip = atoms.row(a).dot(&atoms.row(b));
                if !(ip >= -PROBABILITY_TOLERANCE && ip <= 1.0 + PROBABILITY_TOLERANCE) {
                    return Err(RdpgError::InvalidModel(format!(
                        "atoms {a} and {b} have inner product {ip} outside [0, 1]"
                    )));
                }
                if a != b && (atoms.row(a) - atoms.row(b)).norm() <= 1e-12 {
                    return Err(RdpgError::InvalidModel(format!("atoms {a} and {b} coincide")));
                }
            }
        }
        Ok(Self { weights, atoms })
    }

    /// Atoms from the spectral square root ν = U_B·S_B^{1/2} of a positive
    /// semidefinite block matrix, keeping the nonzero part of the spectrum.
    pub fn from_block_matrix(b: &DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let k = b.nrows();
        if b.ncols() != k || weights.len() != k {
            return Err(RdpgError::DimensionMismatch(format!(
                "block matrix {}x{} with {} weights",
                b.nrows(),
                b.ncols(),
                weights.len()
            )));
        }
        if (b - b.transpose()).amax() > 1e-12 {
            return Err(RdpgError::InvalidModel("block matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(b.clone());
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(RdpgError::InvalidModel("block matrix is not positive semidefinite".into()));
        }
        let mut order: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 1e-10 * scale).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&c)));
        if order.is_empty() {
            return Err(RdpgError::InvalidModel("block matrix is zero".into()));
        }
        let mut atoms = DMatrix::zeros(k, order.len());
        for (col, &idx) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(idx).into_owned();
            let dom = v.iamax();
            if v[dom] < 0.0 {
                v.neg_mut();
            }
            atoms.set_column(col, &(v * eig.eigenvalues[idx].sqrt()));
        }
        Self::new(weights, atoms)
    }

    /// Flips the sign of the chosen latent coordinates (an orthogonal change of basis).
    pub fn reflected(&self, columns: &[usize]) -> Self {
        let mut atoms = self.atoms.clone();
        for &c in columns {
            atoms.column_mut(c).neg_mut();
        }
        Self {
            weights: self.weights.clone(),
            atoms,
        }
    }

    pub fn rotated(&self, w: &DMatrix<f64>) -> Result<Self> {
        Self::new(self.weights.clone(), &self.atoms * w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> DVector<f64> {
        self.atoms.row(k).transpose()
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    /// B = ν·νᵀ.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        &self.atoms * self.atoms.transpose()
    }
}

/// Two-block SBM with B = [[0.42, 0.42], [0.42, 0.5]] and π = (0.6, 0.4).
///
/// Atoms are the spectral square root of B, oriented so that the first atom
/// is ≈ (0.63, −0.14) and the second ≈ (0.69, 0.13).
pub fn two_block_example() -> MixtureSpec {
    let b = DMatrix::from_row_slice(2, 2, &[0.42, 0.42, 0.42, 0.5]);
    let m = MixtureSpec::from_block_matrix(&b, vec![0.6, 0.4]).expect("valid example");
    if m.atoms()[(0, 1)] > 0.0 {
        m.reflected(&[1])
    } else {
        m
    }
}

/// Distribution of the degree-correction factors θ of a DCSBM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeFactor {
    Uniform { low: f64, high: f64 },
    Constant(f64),
}

impl Default for DegreeFactor {
    fn default() -> Self {
        DegreeFactor::Uniform { low: 0.2, high: 1.0 }
    }
}

impl DegreeFactor {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DegreeFactor::Uniform { low, high } => low > 0.0 && low <= high && high <= 1.0,
            DegreeFactor::Constant(c) => c > 0.0 && c <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(RdpgError::InvalidModel(format!("degree factors must lie in (0, 1]: {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            DegreeFactor::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            DegreeFactor::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentPositionModel {
    /// Fixed n×d latent positions.
    Fixed { positions: DMatrix<f64> },
    /// Stochastic blockmodel: i.i.d. block labels, X_i = ν_{τ(i)}.
    PointMass { mixture: MixtureSpec },
    /// X_i = θ_i·ν_{τ(i)} with unit-norm atoms.
    DegreeCorrected { mixture: MixtureSpec, degree: DegreeFactor },
    /// X_i = Σ_k w_ik ν_k with w_i ~ Dirichlet(α).
    MixedMembership { alpha: Vec<f64>, corners: DMatrix<f64> },
    /// X_i ~ Dirichlet(α) on the simplex in R^{len α}.
    Dirichlet { alpha: Vec<f64> },
}

impl LatentPositionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LatentPositionModel::Fixed { positions } => {
                if positions.ncols() == 0 {
                    return Err(RdpgError::DimensionMismatch("latent dimension is zero".into()));
                }
                Ok(())
            }
            LatentPositionModel::PointMass { .. } => Ok(()),
            LatentPositionModel::DegreeCorrected { mixture, degree } => {
                degree.validate()?;
                for k in 0..mixture.k() {
                    let norm = mixture.atom(k).norm();
                    if (norm - 1.0).abs() > 1e-9 {
                        return Err(RdpgError::InvalidModel(format!("DCSBM atom {k} has norm {norm}, need 1")));
                    }
                }
                Ok(())
            }
            LatentPositionModel::MixedMembership { alpha, corners } => {
                check_alpha(alpha)?;
                if corners.nrows() != alpha.len() {
                    return Err(RdpgError::DimensionMismatch(format!(
                        "{} concentrations for {} corners",
                        alpha.len(),
                        corners.nrows()
                    )));
                }
                let k = corners.nrows();
                for a in 0..k {
                    for b in a..k {
                        let ip = corners.row(a).dot(&corners.row(b));
                        if !(ip >= -PROBABILITY_TOLERANCE && ip <= 1.0 + PROBABILITY_TOLERANCE) {
                            return Err(RdpgError::InvalidModel(format!(
                                "corners {a} and {b} have inner product {ip}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            LatentPositionModel::Dirichlet { alpha } => check_alpha(alpha),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LatentPositionModel::Fixed { positions } => positions.ncols(),
            LatentPositionModel::PointMass { mixture } => mixture.dim(),
            LatentPositionModel::DegreeCorrected { mixture, .. } => mixture.dim(),
            LatentPositionModel::MixedMembership { corners, .. } => corners.ncols(),
            LatentPositionModel::Dirichlet { alpha } => alpha.len(),
        }
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() < 2 || alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(RdpgError::InvalidModel(format!(
            "Dirichlet concentration must have >= 2 positive entries, got {alpha:?}"
        )));
    }
    Ok(())
}

/// Latent positions drawn from a model, before forming P.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    pub positions: DMatrix<f64>,
    /// Block assignments for point-mass and degree-corrected models.
    pub labels: Option<Vec<usize>>,
    pub degree_factors: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub positions: DMatrix<f64>,
    pub probabilities: ProbabilityMatrix,
    pub labels: Option<Vec<usize>>,
    pub degree_factors: Option<Vec<f64>>,
}

/// Draws n latent positions.
pub fn draw_positions(model: &LatentPositionModel, n: usize, stream: SeedStream) -> Result<LatentDraw> {
    if n == 0 {
        return Err(RdpgError::InvalidArgument("n must be at least 1".into()));
    }
    model.validate()?;
    let mut rng = stream.rng();
    let d = model.dim();
    let draw = match model {
        LatentPositionModel::Fixed { positions } => {
            if positions.nrows() != n {
                return Err(RdpgError::DimensionMismatch(format!(
                    "model has {} positions, asked for n={n}",
                    positions.nrows()
                )));
            }
            LatentDraw {
                positions: positions.clone(),
                labels: None,
                degree_factors: None,
            }
        }
        LatentPositionModel::PointMass { mixture } => {
            let labels = draw_labels(mixture, n, &mut rng)?;
            LatentDraw {
                positions: DMatrix::from_fn(n, d, |i, j| mixture.atoms()[(labels[i], j)]),
                labels: Some(labels),
                degree_factors: None,
            }
        }
        LatentPositionModel::DegreeCorrected { mixture, degree } => {
            let labels = draw_labels(mixture, n, &mut rng)?;
            let theta: Vec<f64> = (0..n).map(|_| degree.sample(&mut rng)).collect();
            LatentDraw {
                positions: DMatrix::from_fn(n, d, |i, j| theta[i] * mixture.atoms()[(labels[i], j)]),
                labels: Some(labels),
                degree_factors: Some(theta),
            }
        }
        LatentPositionModel::MixedMembership { alpha, corners } => {
            let dir = Dirichlet::new(alpha).map_err(|e| RdpgError::InvalidModel(e.to_string()))?;
            let mut x = DMatrix::zeros(n, d);
            for i in 0..n {
                let w = dir.sample(&mut rng);
                for (k, wk) in w.iter().enumerate() {
                    for j in 0..d {
                        x[(i, j)] += wk * corners[(k, j)];
                    }
                }
            }
            LatentDraw {
                positions: x,
                labels: None,
                degree_factors: None,
            }
        }
        LatentPositionModel::Dirichlet { alpha } => {
            let dir = Dirichlet::new(alpha).map_err(|e| RdpgError::InvalidModel(e.to_string()))?;
            let mut x = DMatrix::zeros(n, d);
            for i in 0..n {
                let w = dir.sample(&mut rng);
                for j in 0..d {
                    x[(i, j)] = w[j];
                }
            }
            LatentDraw {
                positions: x,
                labels: None,
                degree_factors: None,
            }
        }
    };
    Ok(draw)
}

fn draw_labels<R: Rng>(mixture: &MixtureSpec, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(mixture.weights()).map_err(|e| RdpgError::InvalidModel(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Latent positions and P = X·Xᵀ for an n-vertex draw of the model.
pub fn realize_model(model: &LatentPositionModel, n: usize, stream: SeedStream) -> Result<Realization> {
    let draw = draw_positions(model, n, stream)?;
    let probabilities = ProbabilityMatrix::from_positions(&draw.positions)?;
    Ok(Realization {
        positions: draw.positions,
        probabilities,
        labels: draw.labels,
        degree_factors: draw.degree_factors,
    })
}
