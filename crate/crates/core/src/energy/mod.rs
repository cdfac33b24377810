//! Material models, energy densities, and global energy/gradient/Hessian
//! assembly.

mod assembly;
mod density;
mod penalty;

pub use assembly::{assemble, total_energy, AssembleOptions, Assembly};
pub(crate) use assembly::{
    tet_elastic_stencil, tet_energy_value, tri_epidermis_stencil, tri_energy_value,
};
pub use density::{
    alpha_tilde, lame_from_young_poisson, psi_dev_nh, psi_dev_nh_value, psi_epidermis,
    psi_epidermis_value, psi_unh, psi_unh_value, DensityEval, SurfaceDensityEval,
};
pub use penalty::{penalty_d2u, penalty_du, penalty_u, penalty_un};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("neo-Hookean energy undefined for inverted element (det F = {det_f:.6e})")]
    InvertedElement { det_f: f64 },
    #[error("neo-Hookean energy undefined for inverted element {element} (det F = {det_f:.6e})")]
    InvertedTet { element: usize, det_f: f64 },
    #[error("incompressible limit; use constraints")]
    IncompressibleLimit,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Choice of elastic model for the bulk material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaterialModel {
    /// Standard neo-Hookean with logarithmic volume terms; incompressibility
    /// is approached indirectly through a large `lambda`. Undefined for
    /// inverted elements.
    NeoHookean,
    /// Deviatoric neo-Hookean under the volume-preserving rescaling plus the
    /// compression penalty `lambda U(J; beta)`. Defined for all element
    /// states; meant to be paired with zonal volume constraints.
    DeviatoricNeoHookean,
}

/// Bulk material parameters shared by an element set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Shear modulus (Pa).
    pub mu: f64,
    /// First Lamé parameter / volume-penalty coefficient (Pa).
    pub lambda: f64,
    /// Penalty nonlinearity; zero recovers the plain quadratic volume term.
    pub beta: f64,
    /// Threshold below which the deviatoric rescaling switches to its
    /// quadratic extension.
    pub epsilon: f64,
    pub model: MaterialModel,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.mu > 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            mu: 1.0,
            lambda: 10.0,
            beta: 1.0,
            epsilon: 0.1,
            model: MaterialModel::DeviatoricNeoHookean,
        }
    }
}

/// Surface (epidermis) energy parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidermisParams {
    /// Thickness-integrated surface stiffness (Pa m).
    pub lambda_e: f64,
    /// Area-penalty nonlinearity.
    pub gamma: f64,
}

impl EpidermisParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.lambda_e >= 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "lambda_e must be non-negative, got {}",
                self.lambda_e
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(EnergyError::InvalidParameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for EpidermisParams {
    fn default() -> Self {
        EpidermisParams {
            lambda_e: 0.0,
            gamma: 1.0,
        }
    }
}

/// Total energy and its additive terms (J).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    /// Elastic model term: the deviatoric part for the constrained model,
    /// the full density for the standard neo-Hookean model.
    pub deviatoric: f64,
    pub penalty: f64,
    pub epidermis: f64,
    /// Populated by the implicit-Euler incremental potential; zero for
    /// plain elastic assembly.
    pub inertial: f64,
}

impl EnergyReport {
    pub(crate) fn from_terms(deviatoric: f64, penalty: f64, epidermis: f64, inertial: f64) -> Self {
        EnergyReport {
            total: deviatoric + penalty + epidermis + inertial,
            deviatoric,
            penalty,
            epidermis,
            inertial,
        }
    }
}
