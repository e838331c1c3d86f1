//! Numerical laboratory for entropic dynamics.
//!
//! * [`model`]: grids, parameters, wavefunction / hydrodynamic / velocity representations.
//! * [`propagator`]: split-operator Schrödinger evolution, the `ξ = 0` hybrid
//!   hydrodynamics and the conserved ensemble Hamiltonian.
//! * [`sampler`]: the Gaussian transition kernel, Euler–Maruyama ensembles for
//!   finite `α′` and RK4 Bohmian trajectories for `α′ = ∞`.
//! * [`diagnostics`]: circulation and winding, ensemble/density distances,
//!   power-law fits and conservation reports.
//! * [`harness`]: scenario configs, built-in scenarios with analytic oracles,
//!   run orchestration and on-disk artifacts.

pub mod model;
pub mod spectral;
pub mod stencil;
pub mod propagator;
pub mod sampler;
pub mod diagnostics;
pub mod harness;
