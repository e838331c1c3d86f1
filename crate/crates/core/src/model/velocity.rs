use num_complex::Complex64;

use super::state::{density_floor, phase_gradient};
use super::{Grid, HydroState, MassTensor, ModelError, ValidatedParameters, WaveFunction};
use crate::spectral::Spectral;

/// Current, osmotic and drift velocities on the grid, indexed `[axis][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFields {
    pub grid: Grid,
    pub current_v: Vec<Vec<f64>>,
    pub osmotic_u: Vec<Vec<f64>>,
    pub drift_b: Vec<Vec<f64>>,
    /// Nodes where `ρ` fell below the floor; their values use the floored density.
    pub floored_nodes: Vec<usize>,
}

impl VelocityFields {
    fn assemble(
        grid: Grid,
        current_v: Vec<Vec<f64>>,
        osmotic_u: Vec<Vec<f64>>,
        floored_nodes: Vec<usize>,
    ) -> Self {
        let drift_b = current_v
            .iter()
            .zip(&osmotic_u)
            .map(|(v, u)| v.iter().zip(u).map(|(v, u)| v - u).collect())
            .collect();
        Self {
            grid,
            current_v,
            osmotic_u,
            drift_b,
            floored_nodes,
        }
    }

    /// Interpolated drift `b(x)`.
    pub fn drift_at(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.grid.interpolate(&self.drift_b[a], x);
        }
    }

    /// Interpolated current velocity `v(x)`.
    pub fn current_at(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.grid.interpolate(&self.current_v[a], x);
        }
    }
}

fn check_masses(grid: &Grid, m: &MassTensor) -> Result<(), ModelError> {
    if m.dims() != grid.dims() {
        return Err(ModelError::ShapeMismatch {
            expected: grid.dims(),
            got: m.dims(),
        });
    }
    Ok(())
}

/// Velocity fields of a wavefunction.
///
/// `v^A = (ħ/m_A) Im(∂_AΨ/Ψ)` and `u^A = -(η̃/α′)(1/m_A) ∂_A log ρ^{1/2}`,
/// both evaluated as `Ψ*∂Ψ / ρ` with spectral derivatives and the density
/// floored at `1e-12 max ρ`. `b = v - u`.
pub fn compute_velocity_fields(
    psi: &WaveFunction,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<VelocityFields, ModelError> {
    let spectral = Spectral::new(psi.grid());
    compute_velocity_fields_with(&spectral, psi, p, m)
}

/// As [`compute_velocity_fields`], reusing FFT plans.
pub fn compute_velocity_fields_with(
    spectral: &Spectral,
    psi: &WaveFunction,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<VelocityFields, ModelError> {
    velocity_fields_with_hbar(spectral, psi, p.hbar(), p, m)
}

/// Velocity fields of a `Ψ` whose phase is `Φ/hbar`; the linear evolution
/// produces such states with `hbar = ħ_eff`.
pub fn velocity_fields_with_hbar(
    spectral: &Spectral,
    psi: &WaveFunction,
    hbar: f64,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<VelocityFields, ModelError> {
    let grid = psi.grid();
    check_masses(grid, m)?;
    let rho = psi.density();
    let floor = density_floor(&rho);
    let floored_nodes: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] < floor).collect();
    let mut current_v = Vec::with_capacity(grid.dims());
    let mut osmotic_u = Vec::with_capacity(grid.dims());
    for a in 0..grid.dims() {
        let d = spectral.derivative(psi.values(), a);
        let inv_m = m.inverse(a);
        let mut v = Vec::with_capacity(rho.len());
        let mut u = Vec::with_capacity(rho.len());
        for ((z, dz), &r) in psi.values().iter().zip(&d).zip(&rho) {
            let q: Complex64 = z.conj() * dz / r.max(floor);
            v.push(hbar * inv_m * q.im);
            // q.re = ∂ log ρ^{1/2}
            u.push(match p.alpha_prime() {
                super::AlphaPrime::Finite(alpha) => -(p.eta_tilde() / alpha) * inv_m * q.re,
                super::AlphaPrime::Infinite => 0.0,
            });
        }
        current_v.push(v);
        osmotic_u.push(u);
    }
    Ok(VelocityFields::assemble(
        grid.clone(),
        current_v,
        osmotic_u,
        floored_nodes,
    ))
}

/// Velocity fields of a hydrodynamic state: `v = m⁻¹∇Φ`, `u = -η m⁻¹ ∇ log ρ^{1/2}`.
///
/// The density gradient is spectral; `∇Φ` follows the state's phase chart.
pub fn velocity_fields_from_hydro(
    spectral: &Spectral,
    h: &HydroState,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<VelocityFields, ModelError> {
    let grid = h.grid();
    check_masses(grid, m)?;
    let rho = h.rho();
    let floor = density_floor(rho);
    let floored_nodes: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] < floor).collect();
    let grad_phi = phase_gradient(h, p.hbar(), spectral);
    let mut current_v = Vec::with_capacity(grid.dims());
    let mut osmotic_u = Vec::with_capacity(grid.dims());
    for (a, g) in grad_phi.into_iter().enumerate() {
        let inv_m = m.inverse(a);
        current_v.push(g.iter().map(|g| inv_m * g).collect());
        let u = match p.alpha_prime() {
            super::AlphaPrime::Finite(alpha) => {
                let drho = spectral.derivative_real(rho, a);
                drho.iter()
                    .zip(rho)
                    .map(|(d, &r)| -(p.eta_tilde() / alpha) * inv_m * 0.5 * d / r.max(floor))
                    .collect()
            }
            super::AlphaPrime::Infinite => vec![0.0; rho.len()],
        };
        osmotic_u.push(u);
    }
    Ok(VelocityFields::assemble(
        grid.clone(),
        current_v,
        osmotic_u,
        floored_nodes,
    ))
}
