//! Latent position models as given on the command line or in a JSON model file.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use rdpg::model::DegreeFactor;
use rdpg::{LatentPositionModel, MixtureSpec};

use crate::error::{CliError, CliResult};

/// JSON model file contents, tagged by `"model"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Sbm {
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        pi: Vec<f64>,
    },
    Dcsbm {
        /// Unit-norm block directions, one row per block.
        atoms: Vec<Vec<f64>>,
        pi: Vec<f64>,
        theta_low: f64,
        theta_high: f64,
    },
    Mmsbm {
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        alpha: Vec<f64>,
    },
    Dirichlet {
        alpha: Vec<f64>,
    },
    Rdpg {
        positions: Vec<Vec<f64>>,
    },
}

pub fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::from(rdpg::RdpgError::DimensionMismatch(format!("{what} must be a nonempty rectangular matrix"))));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Sbm { .. } => "sbm",
            ModelSpec::Dcsbm { .. } => "dcsbm",
            ModelSpec::Mmsbm { .. } => "mmsbm",
            ModelSpec::Dirichlet { .. } => "dirichlet",
            ModelSpec::Rdpg { .. } => "rdpg",
        }
    }

    /// The block mixture of an SBM specification.
    pub fn mixture(&self) -> CliResult<MixtureSpec> {
        match self {
            ModelSpec::Sbm { b, pi } => Ok(MixtureSpec::from_block_matrix(&rows_to_matrix(b, "B")?, pi.clone())?),
            other => Err(CliError::usage(format!("this command needs an sbm model, got {}", other.name()))),
        }
    }

    pub fn build(&self) -> CliResult<LatentPositionModel> {
        let model = match self {
            ModelSpec::Sbm { .. } => LatentPositionModel::PointMass { mixture: self.mixture()? },
            ModelSpec::Dcsbm { atoms, pi, theta_low, theta_high } => LatentPositionModel::DegreeCorrected {
                mixture: MixtureSpec::new(pi.clone(), rows_to_matrix(atoms, "atoms")?)?,
                degree: DegreeFactor::Uniform { low: *theta_low, high: *theta_high },
            },
            ModelSpec::Mmsbm { b, alpha } => {
                let k = alpha.len();
                let mixture = MixtureSpec::from_block_matrix(&rows_to_matrix(b, "B")?, vec![1.0 / k as f64; k])?;
                LatentPositionModel::MixedMembership {
                    alpha: alpha.clone(),
                    corners: mixture.atoms().clone(),
                }
            }
            ModelSpec::Dirichlet { alpha } => LatentPositionModel::Dirichlet { alpha: alpha.clone() },
            ModelSpec::Rdpg { positions } => LatentPositionModel::Fixed {
                positions: rows_to_matrix(positions, "positions")?,
            },
        };
        model.validate()?;
        Ok(model)
    }
}
