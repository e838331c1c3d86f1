use std::f64::consts::PI;

use num_complex::Complex64;

use super::{Grid, ModelError, ValidatedParameters};
use crate::spectral::Spectral;
use crate::stencil;

/// Tolerance on `∫|Ψ|² dx = 1` and `∫ρ dx = 1`.
pub const NORM_TOL: f64 = 1e-8;

/// Relative density floor used inside logarithms and divisions near nodes.
pub const RHO_FLOOR_REL: f64 = 1e-12;

/// Absolute floor `ε_ρ = 1e-12 · max ρ` for a density field.
pub fn density_floor(rho: &[f64]) -> f64 {
    RHO_FLOOR_REL * rho.iter().cloned().fold(0.0, f64::max)
}

/// Complex field `Ψ` on a grid, normalized to unit probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl WaveFunction {
    /// Wrap values that are already normalized (within [`NORM_TOL`]).
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self, ModelError> {
        check_len(&grid, values.len())?;
        let psi = Self { grid, values };
        let norm = psi.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(ModelError::NotNormalized { norm });
        }
        Ok(psi)
    }

    /// Rescale arbitrary values to unit norm.
    pub fn normalized(grid: Grid, mut values: Vec<Complex64>) -> Result<Self, ModelError> {
        check_len(&grid, values.len())?;
        let norm = grid.integrate(&values.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ModelError::NotNormalized { norm });
        }
        let s = 1.0 / norm.sqrt();
        values.iter_mut().for_each(|z| *z *= s);
        Ok(Self { grid, values })
    }

    /// Sample `f` at the nodes and normalize.
    pub fn from_fn<F: FnMut(&[f64]) -> Complex64>(grid: Grid, f: F) -> Result<Self, ModelError> {
        let values = grid.map_nodes(f);
        Self::normalized(grid, values)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.grid.integrate(&self.density())
    }

    /// Multiply by a global phase `e^{iθ}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let w = Complex64::from_polar(1.0, theta);
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z * w).collect(),
        }
    }
}

fn check_len(grid: &Grid, len: usize) -> Result<(), ModelError> {
    if len != grid.len() {
        return Err(ModelError::ShapeMismatch {
            expected: grid.len(),
            got: len,
        });
    }
    Ok(())
}

/// How `phi_big` is charted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseChart {
    /// Principal value `ħ·arg Ψ ∈ (-πħ, πħ]` per node; only gradients are meaningful.
    Principal,
    /// A continuous (unwrapped, possibly non-periodic) phase such as `p₀x`.
    Continuous,
}

/// Hydrodynamic pair `(ρ, Φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroState {
    grid: Grid,
    rho: Vec<f64>,
    phi_big: Vec<f64>,
    chart: PhaseChart,
}

impl HydroState {
    /// Build a state with a continuous phase. `rho` must already integrate to one.
    pub fn new(grid: Grid, rho: Vec<f64>, phi_big: Vec<f64>) -> Result<Self, ModelError> {
        Self::with_chart(grid, rho, phi_big, PhaseChart::Continuous)
    }

    pub fn with_chart(
        grid: Grid,
        rho: Vec<f64>,
        phi_big: Vec<f64>,
        chart: PhaseChart,
    ) -> Result<Self, ModelError> {
        check_len(&grid, rho.len())?;
        check_len(&grid, phi_big.len())?;
        if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(ModelError::NegativeDensity {
                node: i,
                value: rho[i],
            });
        }
        if let Some(i) = phi_big.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(format!("phase at node {i}")));
        }
        let norm = grid.integrate(&rho);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(ModelError::NotNormalized { norm });
        }
        Ok(Self {
            grid,
            rho,
            phi_big,
            chart,
        })
    }

    /// Rescale `rho` to unit mass, continuous chart.
    pub fn normalized(grid: Grid, mut rho: Vec<f64>, phi_big: Vec<f64>) -> Result<Self, ModelError> {
        check_len(&grid, rho.len())?;
        let norm = grid.integrate(&rho);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ModelError::NotNormalized { norm });
        }
        rho.iter_mut().for_each(|r| *r /= norm);
        Self::new(grid, rho, phi_big)
    }

    pub(crate) fn from_parts_unchecked(
        grid: Grid,
        rho: Vec<f64>,
        phi_big: Vec<f64>,
        chart: PhaseChart,
    ) -> Self {
        Self {
            grid,
            rho,
            phi_big,
            chart,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn phi_big(&self) -> &[f64] {
        &self.phi_big
    }
    pub fn chart(&self) -> PhaseChart {
        self.chart
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.rho)
    }

    /// Unwrap a principal-valued phase into a continuous one, axis by axis.
    ///
    /// Jumps larger than `πħ` between neighbouring nodes are taken to be
    /// branch-cut crossings. Only meaningful for vortex-free states.
    pub fn unwrapped(&self, hbar: f64) -> Self {
        if self.chart == PhaseChart::Continuous {
            return self.clone();
        }
        let period = 2.0 * PI * hbar;
        let mut phi = self.phi_big.clone();
        let grid = &self.grid;
        // Axis a is swept on the lines whose indices on axes > a are zero; their
        // start nodes were already fixed by the sweeps over earlier axes.
        for axis in 0..grid.dims() {
            let n = grid.points()[axis];
            let stride = grid.strides()[axis];
            for start in 0..phi.len() {
                if (axis..grid.dims()).any(|b| grid.axis_index(start, b) != 0) {
                    continue;
                }
                let mut prev = phi[start];
                for j in 1..n {
                    let idx = start + j * stride;
                    let mut step = phi[idx] - prev;
                    step -= period * (step / period).round();
                    prev += step;
                    phi[idx] = prev;
                }
            }
        }
        Self {
            grid: self.grid.clone(),
            rho: self.rho.clone(),
            phi_big: phi,
            chart: PhaseChart::Continuous,
        }
    }
}

/// `ρ = |Ψ|²`, `Φ = ħ arg Ψ` as a principal value.
pub fn wavefunction_to_hydro(psi: &WaveFunction, p: &ValidatedParameters) -> HydroState {
    to_hydro_with_hbar(psi, p.hbar())
}

/// As [`wavefunction_to_hydro`] with an explicit phase unit `hbar`.
pub fn to_hydro_with_hbar(psi: &WaveFunction, hbar: f64) -> HydroState {
    let rho = psi.density();
    let phi_big = psi
        .values()
        .iter()
        .map(|z| {
            let a = z.arg();
            // arg yields -π for a negative real with -0.0 imaginary part
            hbar * if a <= -PI { PI } else { a }
        })
        .collect();
    HydroState::from_parts_unchecked(psi.grid().clone(), rho, phi_big, PhaseChart::Principal)
}

/// `Ψ = ρ^{1/2} e^{iΦ/ħ}`.
pub fn hydro_to_wavefunction(h: &HydroState, p: &ValidatedParameters) -> WaveFunction {
    to_wavefunction_with_hbar(h, p.hbar())
}

/// As [`hydro_to_wavefunction`] with an explicit phase unit `hbar`.
pub fn to_wavefunction_with_hbar(h: &HydroState, hbar: f64) -> WaveFunction {
    let values = h
        .rho()
        .iter()
        .zip(h.phi_big())
        .map(|(&r, &phi)| Complex64::from_polar(r.sqrt(), phi / hbar))
        .collect();
    WaveFunction::from_parts_unchecked(h.grid().clone(), values)
}

/// `∇Φ` per axis.
///
/// Principal charts go through `ħ Im(Ψ* ∂Ψ)/ρ` with spectral derivatives so
/// that branch cuts never enter; continuous charts are differenced directly
/// with non-periodic fourth-order stencils.
pub fn phase_gradient(h: &HydroState, hbar: f64, spectral: &Spectral) -> Vec<Vec<f64>> {
    let grid = h.grid();
    match h.chart() {
        PhaseChart::Continuous => (0..grid.dims())
            .map(|a| stencil::first_derivative(grid, h.phi_big(), a))
            .collect(),
        PhaseChart::Principal => {
            let psi = to_wavefunction_with_hbar(h, hbar);
            let floor = density_floor(h.rho());
            (0..grid.dims())
                .map(|a| {
                    let d = spectral.derivative(psi.values(), a);
                    psi.values()
                        .iter()
                        .zip(&d)
                        .zip(h.rho())
                        .map(|((z, dz), &r)| hbar * (z.conj() * dz).im / r.max(floor))
                        .collect()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_parameters, AlphaPrime, ModelParameters};
    use proptest::prelude::*;

    fn params(hbar: f64) -> ValidatedParameters {
        let mut p = ModelParameters::standard(AlphaPrime::Finite(1.0), 1e-3);
        p.hbar = hbar;
        p.eta_tilde = hbar;
        validate_parameters(&p).unwrap()
    }

    fn vortex(grid: &Grid, winding: i32) -> WaveFunction {
        WaveFunction::from_fn(grid.clone(), |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::new(x[0], x[1]).powi(winding) * (-r2 / 4.0).exp()
        })
        .unwrap()
    }

    #[test]
    fn constant_state_has_zero_phase() {
        let grid = Grid::line(32, 4.0).unwrap();
        let psi = WaveFunction::from_fn(grid, |_| Complex64::new(1.0, 0.0)).unwrap();
        let h = wavefunction_to_hydro(&psi, &params(1.0));
        let r0 = h.rho()[0];
        assert!(h.rho().iter().all(|r| (r - r0).abs() < 1e-15));
        assert!((r0 - 0.25).abs() < 1e-14);
        assert!(h.phi_big().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn global_phase_shifts_phi() {
        let grid = Grid::line(32, 8.0).unwrap();
        let psi = WaveFunction::from_fn(grid, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0)).unwrap();
        let p = params(2.0);
        let h0 = wavefunction_to_hydro(&psi, &p);
        let h1 = wavefunction_to_hydro(&psi.with_global_phase(PI / 4.0), &p);
        for i in 0..32 {
            assert!((h0.rho()[i] - h1.rho()[i]).abs() < 1e-15);
            assert!((h1.phi_big()[i] - h0.phi_big()[i] - 2.0 * PI / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vortex_phase_is_atan2() {
        let grid = Grid::new(vec![32, 32], vec![10.0, 10.0]).unwrap();
        let h = wavefunction_to_hydro(&vortex(&grid, 1), &params(1.0));
        let mut x = [0.0; 2];
        for i in 0..grid.len() {
            grid.node_position(i, &mut x);
            if x[0] == 0.0 && x[1] == 0.0 {
                continue;
            }
            let mut expect = x[1].atan2(x[0]);
            if expect <= -PI {
                expect = PI;
            }
            assert!((h.phi_big()[i] - expect).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn boosted_gaussian_from_hydro() {
        let grid = Grid::line(128, 20.0).unwrap();
        let p0 = 1.5;
        let rho = grid.map_nodes(|x| (-x[0] * x[0] / 2.0).exp());
        let phi = grid.map_nodes(|x| p0 * x[0]);
        let h = HydroState::normalized(grid.clone(), rho, phi).unwrap();
        let psi = hydro_to_wavefunction(&h, &params(1.0));
        let psi_ref = WaveFunction::from_fn(grid, |x| {
            Complex64::from_polar((-x[0] * x[0] / 4.0).exp(), p0 * x[0])
        })
        .unwrap();
        for (a, b) in psi.values().iter().zip(psi_ref.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn vortex_round_trip() {
        let grid = Grid::new(vec![32, 32], vec![10.0, 10.0]).unwrap();
        let p = params(1.0);
        let psi = vortex(&grid, 2);
        let h = wavefunction_to_hydro(&psi, &p);
        let h2 = wavefunction_to_hydro(&hydro_to_wavefunction(&h, &p), &p);
        for i in 0..grid.len() {
            assert!((h.rho()[i] - h2.rho()[i]).abs() < 1e-12);
            let d = (h.phi_big()[i] - h2.phi_big()[i]) / (2.0 * PI);
            assert!((d - d.round()).abs() < 1e-10);
        }
    }

    #[test]
    fn hydro_state_rejects_bad_inputs() {
        let grid = Grid::line(8, 1.0).unwrap();
        assert!(matches!(
            HydroState::new(grid.clone(), vec![1.0; 8], vec![0.0; 8]),
            Ok(_)
        ));
        assert!(matches!(
            HydroState::new(grid.clone(), vec![2.0; 8], vec![0.0; 8]),
            Err(ModelError::NotNormalized { .. })
        ));
        let mut rho = vec![1.0; 8];
        rho[3] = -0.1;
        assert!(matches!(
            HydroState::new(grid.clone(), rho, vec![0.0; 8]),
            Err(ModelError::NegativeDensity { node: 3, .. })
        ));
        assert!(matches!(
            WaveFunction::new(grid, vec![Complex64::new(0.5, 0.0); 8]),
            Err(ModelError::NotNormalized { .. })
        ));
    }

    #[test]
    fn unwrap_recovers_linear_phase() {
        let grid = Grid::line(64, 20.0).unwrap();
        let p = params(1.0);
        let psi = WaveFunction::from_fn(grid.clone(), |x| {
            Complex64::from_polar((-x[0] * x[0] / 8.0).exp(), 2.0 * x[0])
        })
        .unwrap();
        let h = wavefunction_to_hydro(&psi, &p).unwrapped(1.0);
        assert_eq!(h.chart(), PhaseChart::Continuous);
        let shift = h.phi_big()[0] - 2.0 * grid.coordinate(0, 0);
        for j in 0..64 {
            let expect = 2.0 * grid.coordinate(0, j) + shift;
            assert!((h.phi_big()[j] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn principal_and_continuous_gradients_agree() {
        let grid = Grid::line(128, 20.0).unwrap();
        let spectral = Spectral::new(&grid);
        let k = 2.0 * PI * 3.0 / 20.0;
        let rho = grid.map_nodes(|x| (-x[0] * x[0] / 2.0).exp());
        let phi = grid.map_nodes(|x| k * x[0]);
        let cont = HydroState::normalized(grid.clone(), rho, phi).unwrap();
        let p = params(1.0);
        let wrapped = wavefunction_to_hydro(&hydro_to_wavefunction(&cont, &p), &p);
        let g1 = phase_gradient(&cont, 1.0, &spectral);
        let g2 = phase_gradient(&wrapped, 1.0, &spectral);
        for j in 32..96 {
            assert!((g1[0][j] - k).abs() < 1e-10);
            assert!((g2[0][j] - k).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn random_round_trip(seed in 0u64..1000, hbar in 0.2f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::line(16, 2.0).unwrap();
            let rho: Vec<f64> = (0..16).map(|_| rng.random_range(0.01..1.0)).collect();
            let phi: Vec<f64> = (0..16).map(|_| rng.random_range(-20.0..20.0)).collect();
            let h = HydroState::normalized(grid, rho, phi).unwrap();
            let mut p = ModelParameters::standard(AlphaPrime::Infinite, 1e-3);
            p.hbar = hbar;
            p.eta_tilde = hbar;
            let p = validate_parameters(&p).unwrap();
            let back = wavefunction_to_hydro(&hydro_to_wavefunction(&h, &p), &p);
            for i in 0..16 {
                prop_assert!((back.rho()[i] - h.rho()[i]).abs() < 1e-12);
                let turns = (back.phi_big()[i] - h.phi_big()[i]) / (2.0 * PI * hbar);
                prop_assert!((turns - turns.round()).abs() * 2.0 * PI * hbar < 1e-10);
            }
        }
    }
}
