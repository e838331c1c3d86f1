//! Domain types shared by every other module and the conversions between
//! wavefunction, hydrodynamic and velocity-field representations.
//!
//! Configuration space is flattened: a system of `N` particles in `d`
//! spatial dimensions lives on a `D = N·d` axis grid, and [`MassTensor`]
//! carries the mass of the particle owning each axis.

mod grid;
mod params;
mod state;
mod trajectory;
mod velocity;

use thiserror::Error;

pub use grid::Grid;
pub use params::{validate_parameters, AlphaPrime, ModelParameters, ParameterError, ValidatedParameters};
pub use state::{
    density_floor, hydro_to_wavefunction, phase_gradient, wavefunction_to_hydro, HydroState,
    PhaseChart, WaveFunction, NORM_TOL, RHO_FLOOR_REL,
};
pub use state::{to_hydro_with_hbar, to_wavefunction_with_hbar};
pub use trajectory::{trajectory_seed, TrajectoryEnsemble};
pub use velocity::{
    compute_velocity_fields, compute_velocity_fields_with, velocity_fields_from_hydro,
    velocity_fields_with_hbar,
    VelocityFields,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid mass tensor: {0}")]
    InvalidMass(String),
    #[error("expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("state is not normalized: integral = {norm}")]
    NotNormalized { norm: f64 },
    #[error("negative or non-finite density {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
}

/// Diagonal mass tensor `m_AB = m_n δ_AB`, one entry per configuration axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MassTensor {
    masses: Vec<f64>,
}

impl MassTensor {
    pub fn new(masses: Vec<f64>) -> Result<Self, ModelError> {
        if masses.is_empty() {
            return Err(ModelError::InvalidMass("no axes".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(ModelError::InvalidMass(format!("mass {m} is not positive")));
        }
        Ok(Self { masses })
    }

    pub fn uniform(dims: usize, mass: f64) -> Result<Self, ModelError> {
        Self::new(vec![mass; dims])
    }

    /// `N` particles in `d` spatial dimensions with the given per-particle masses.
    pub fn particles(spatial_dims: usize, masses: &[f64]) -> Result<Self, ModelError> {
        Self::new(
            masses
                .iter()
                .flat_map(|&m| std::iter::repeat_n(m, spatial_dims))
                .collect(),
        )
    }

    pub fn dims(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, axis: usize) -> f64 {
        self.masses[axis]
    }

    /// Diagonal entry of `m^{AB}`.
    pub fn inverse(&self, axis: usize) -> f64 {
        1.0 / self.masses[axis]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_tensor_flattens_particles() {
        let m = MassTensor::particles(3, &[1.0, 2.0]).unwrap();
        assert_eq!(m.masses(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(m.inverse(4), 0.5);
        assert!(MassTensor::new(vec![1.0, 0.0]).is_err());
        assert!(MassTensor::new(vec![]).is_err());
    }
}
