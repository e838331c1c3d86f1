//! Field-sector evolution.
//!
//! For `ξ > 0` the Hamilton pair for `(ρ, Φ)` is exactly a linear
//! Schrödinger equation with `ħ_eff = √(8ξ)`, so it is integrated with a
//! Strang split-operator scheme. For `ξ = 0` (the hybrid theory) there is no
//! linear form; `(ρ, Φ)` are integrated directly with RK4. The same direct
//! integrator, with the quantum-potential term switched on, backs
//! [`check_xi_equivalence`].

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    density_floor, phase_gradient, to_wavefunction_with_hbar, Grid, HydroState, MassTensor,
    ModelError, PhaseChart, ValidatedParameters, WaveFunction, NORM_TOL,
};
use crate::spectral::Spectral;
use crate::stencil;

/// Nodes with `ρ` below this fraction of its maximum are outside the support.
const SUPPORT_REL: f64 = 1e-8;

/// RK4 is stable for purely imaginary eigenvalues up to `2√2`; keep a margin.
const RK4_CFL: f64 = 1.5;

/// Default blow-up factor of the velocity gradient that flags a caustic.
pub const CAUSTIC_BLOWUP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("input state is not normalized (integral {norm})")]
    NotNormalized { norm: f64 },
    #[error("xi = 0 has no linear form; use the hybrid propagator")]
    XiZero,
    #[error("hybrid propagation needs xi = 0, got {xi}")]
    XiNonZero { xi: f64 },
    #[error("caustic at t = {time}: velocity gradient grew {growth:.1}x")]
    CausticDetected { time: f64, growth: f64 },
    #[error("hydrodynamic integration needs a continuous phase chart")]
    PrincipalPhase,
    #[error("potential grid does not match the state grid")]
    GridMismatch,
    #[error("invalid duration {0}")]
    InvalidDuration(f64),
    #[error("non-finite field at t = {time}")]
    NonFinite { time: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// External potential `V(x)` sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    grid: Grid,
    values: Vec<f64>,
}

impl PotentialField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, PropagationError> {
        if values.len() != grid.len() {
            return Err(ModelError::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            }
            .into());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("potential".into()).into());
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: &Grid, f: F) -> Result<Self, PropagationError> {
        Self::new(grid.clone(), grid.map_nodes(f))
    }

    /// `V = ½ Σ_A m_A ω² x_A²`.
    pub fn harmonic(grid: &Grid, m: &MassTensor, omega: f64) -> Self {
        let values = grid.map_nodes(|x| {
            x.iter()
                .enumerate()
                .map(|(a, xa)| 0.5 * m.mass(a) * omega * omega * xa * xa)
                .sum()
        });
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Conservation summary of a propagation run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PropagationReport {
    pub steps_taken: usize,
    /// Largest `|∫ρ(t) − ∫ρ(0)|` seen.
    pub norm_drift: f64,
    /// Largest `|H̃ − H̃₀| / |H̃₀|` seen (absolute when `H̃₀ = 0`).
    pub energy_drift: f64,
}

impl PropagationReport {
    pub(crate) fn observe(&mut self, norm: f64, norm0: f64, energy: f64, energy0: f64) {
        self.norm_drift = self.norm_drift.max((norm - norm0).abs());
        let scale = if energy0 != 0.0 { energy0.abs() } else { 1.0 };
        self.energy_drift = self.energy_drift.max((energy - energy0).abs() / scale);
    }
}

/// Number of equal steps of size ≤ `dt` covering `t_final`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> usize {
    let r = t_final / dt;
    if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
        r.round() as usize
    } else {
        r.ceil() as usize
    }
}

fn check_duration(t_final: f64) -> Result<(), PropagationError> {
    if t_final.is_finite() && t_final >= 0.0 {
        Ok(())
    } else {
        Err(PropagationError::InvalidDuration(t_final))
    }
}

/// Strang split-operator stepper for `iħ∂Ψ = -(ħ²/2) m^{AB}∂_A∂_B Ψ + VΨ`.
pub struct LinearPropagator {
    spectral: Spectral,
    half_kinetic: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
    hbar: f64,
    dt: f64,
}

impl LinearPropagator {
    pub fn new(
        v: &PotentialField,
        hbar: f64,
        m: &MassTensor,
        dt: f64,
    ) -> Result<Self, PropagationError> {
        let grid = v.grid();
        if m.dims() != grid.dims() {
            return Err(ModelError::ShapeMismatch {
                expected: grid.dims(),
                got: m.dims(),
            }
            .into());
        }
        let spectral = Spectral::new(grid);
        let mut idx = vec![0usize; grid.dims()];
        let half_kinetic = (0..grid.len())
            .map(|flat| {
                for (a, i) in idx.iter_mut().enumerate() {
                    *i = grid.axis_index(flat, a);
                }
                let e: f64 = idx
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| {
                        let k = spectral.wavenumbers(a)[i];
                        0.5 * hbar * hbar * k * k * m.inverse(a)
                    })
                    .sum();
                Complex64::from_polar(1.0, -e * 0.5 * dt / hbar)
            })
            .collect();
        let potential_phase = v
            .values()
            .iter()
            .map(|&vx| Complex64::from_polar(1.0, -vx * dt / hbar))
            .collect();
        Ok(Self {
            spectral,
            half_kinetic,
            potential_phase,
            hbar,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    fn kinetic_half(&self, values: &mut [Complex64]) {
        self.spectral.forward(values);
        values
            .iter_mut()
            .zip(&self.half_kinetic)
            .for_each(|(z, k)| *z *= k);
        self.spectral.inverse(values);
    }

    /// One step: half kinetic, full potential, half kinetic.
    pub fn step(&self, values: &mut [Complex64]) {
        self.kinetic_half(values);
        values
            .iter_mut()
            .zip(&self.potential_phase)
            .for_each(|(z, p)| *z *= p);
        self.kinetic_half(values);
    }
}

/// `⟨Ψ|H|Ψ⟩ = ∫ (ħ²/2) m^{AB} ∂_AΨ* ∂_BΨ + V|Ψ|²`; equals `H̃[ρ, Φ]` at `ξ = ħ²/8`.
pub fn wavefunction_energy(
    spectral: &Spectral,
    values: &[Complex64],
    v: &PotentialField,
    hbar: f64,
    m: &MassTensor,
) -> f64 {
    let grid = spectral.grid();
    let mut acc: f64 = values
        .iter()
        .zip(v.values())
        .map(|(z, vx)| z.norm_sqr() * vx)
        .sum();
    for a in 0..grid.dims() {
        let d = spectral.derivative(values, a);
        let kin: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        acc += 0.5 * hbar * hbar * m.inverse(a) * kin;
    }
    acc * grid.cell_volume()
}

/// Evolve `Ψ` for `t_final` with `ħ_eff = √(8ξ)` using steps of at most `dt_field`.
pub fn propagate_linear(
    psi: &WaveFunction,
    v: &PotentialField,
    p: &ValidatedParameters,
    m: &MassTensor,
    t_final: f64,
) -> Result<(WaveFunction, PropagationReport), PropagationError> {
    if p.xi() == 0.0 {
        return Err(PropagationError::XiZero);
    }
    check_duration(t_final)?;
    if v.grid() != psi.grid() {
        return Err(PropagationError::GridMismatch);
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(PropagationError::NotNormalized { norm });
    }
    let n = step_count(t_final, p.dt_field());
    let mut report = PropagationReport::default();
    if n == 0 {
        return Ok((psi.clone(), report));
    }
    let hbar = p.hbar_eff();
    let prop = LinearPropagator::new(v, hbar, m, t_final / n as f64)?;
    let grid = psi.grid();
    let mut values = psi.values().to_vec();
    let e0 = wavefunction_energy(prop.spectral(), &values, v, hbar, m);
    let norm0 = norm;
    for _ in 0..n {
        prop.step(&mut values);
        let norm = grid.integrate(&values.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        let e = wavefunction_energy(prop.spectral(), &values, v, hbar, m);
        report.observe(norm, norm0, e, e0);
        report.steps_taken += 1;
    }
    let out = WaveFunction::from_parts_unchecked(grid.clone(), values);
    let norm = out.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
        return Err(PropagationError::NotNormalized { norm });
    }
    Ok((out, report))
}

/// `S = ½ log ρ` for derivatives along `axis`.
///
/// Below `eps` the density is dominated by round-off, and a relative error
/// in `ρ` there is amplified without bound by the quantum term. On each
/// line, `S` outside the outermost nodes with `ρ > eps` is therefore
/// continued by the quadratic through the last three of them (exact for
/// Gaussian tails). Lines with fewer than three such nodes, and gaps
/// between humps, use the floored logarithm.
fn log_amplitude_along(grid: &Grid, rho: &[f64], axis: usize, eps: f64) -> Vec<f64> {
    let floor = eps.max(f64::MIN_POSITIVE);
    let mut s: Vec<f64> = rho.iter().map(|&r| 0.5 * r.max(floor).ln()).collect();
    let n = grid.points()[axis];
    let stride = grid.strides()[axis];
    // Lagrange quadratic through f(0), f(1), f(2) evaluated at integer offset t.
    let quad = |f: [f64; 3], t: f64| {
        f[0] * (t - 1.0) * (t - 2.0) / 2.0 - f[1] * t * (t - 2.0) + f[2] * t * (t - 1.0) / 2.0
    };
    for outer in (0..rho.len()).step_by(n * stride) {
        for inner in 0..stride {
            let idx = |j: usize| outer + inner + j * stride;
            let inside: Vec<usize> = (0..n).filter(|&j| rho[idx(j)] > eps).collect();
            if inside.len() < 3 {
                continue;
            }
            let (lo, hi) = (inside[0], *inside.last().unwrap());
            if hi - lo < 2 {
                continue;
            }
            let left = [s[idx(lo)], s[idx(lo + 1)], s[idx(lo + 2)]];
            for j in 0..lo {
                s[idx(j)] = quad(left, j as f64 - lo as f64);
            }
            let right = [s[idx(hi)], s[idx(hi - 1)], s[idx(hi - 2)]];
            for j in hi + 1..n {
                s[idx(j)] = quad(right, hi as f64 - j as f64);
            }
        }
    }
    s
}

/// Hamilton's equations for `H̃[ρ, Φ]`:
///
/// `∂ρ = -∂_A(ρ m^{AB} ∂_BΦ)`,
/// `∂Φ = -½ m^{AB}∂_AΦ∂_BΦ - V + 4ξ m^{AB}(∂_A∂_B S + ∂_AS ∂_BS)`, `S = ½ log ρ`.
///
/// `Φ` and `S` grow polynomially towards the box edges and go through the
/// non-periodic stencils. The periodic continuity flux is differentiated
/// spectrally at `ξ = 0`; at `ξ > 0` a spectral divergence spreads bulk
/// round-off into the exponentially small tails, where the quantum-potential
/// term amplifies it, so the local FD4 divergence is used instead. Both
/// conserve `∫ρ` exactly.
struct HamiltonFlow {
    spectral: Spectral,
    potential: Vec<f64>,
    xi: f64,
    inv_m: Vec<f64>,
}

impl HamiltonFlow {
    fn rhs(&self, rho: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let grid = self.spectral.grid();
        let len = rho.len();
        let mut drho = vec![0.0; len];
        let mut dphi: Vec<f64> = self.potential.iter().map(|v| -v).collect();
        let eps = SUPPORT_REL * rho.iter().cloned().fold(0.0, f64::max);
        for a in 0..grid.dims() {
            let inv_m = self.inv_m[a];
            let w = stencil::first_derivative(grid, phi, a);
            let flux: Vec<f64> = rho.iter().zip(&w).map(|(r, w)| r * w * inv_m).collect();
            let div = if self.xi > 0.0 {
                stencil::first_derivative(grid, &flux, a)
            } else {
                self.spectral.derivative_real(&flux, a)
            };
            for i in 0..len {
                drho[i] -= div[i];
                dphi[i] -= 0.5 * inv_m * w[i] * w[i];
            }
            if self.xi > 0.0 {
                let s = log_amplitude_along(grid, rho, a, eps);
                let ds = stencil::first_derivative(grid, &s, a);
                let dds = stencil::second_derivative(grid, &s, a);
                for i in 0..len {
                    dphi[i] += 4.0 * self.xi * inv_m * (dds[i] + ds[i] * ds[i]);
                }
            }
        }
        (drho, dphi)
    }

    /// Largest `|m^{AA} ∂_A∂_AΦ|` over the support of `ρ`.
    fn velocity_gradient(&self, rho: &[f64], phi: &[f64]) -> f64 {
        let grid = self.spectral.grid();
        let support = SUPPORT_REL * rho.iter().cloned().fold(0.0, f64::max);
        let mut g: f64 = 0.0;
        for a in 0..grid.dims() {
            let d2 = stencil::second_derivative(grid, phi, a);
            for (i, &r) in rho.iter().enumerate() {
                if r > support {
                    g = g.max((self.inv_m[a] * d2[i]).abs());
                }
            }
        }
        g
    }
}

/// Direct RK4 integrator of the `(ρ, Φ)` Hamilton pair, with caustic monitoring.
pub struct HydroEvolution {
    flow: HamiltonFlow,
    rho: Vec<f64>,
    phi: Vec<f64>,
    time: f64,
    dt: f64,
    steps: usize,
    gradient_ref: f64,
    blowup: f64,
}

impl HydroEvolution {
    /// `horizon` is the intended run length; the caustic threshold is
    /// `blowup · max(initial velocity gradient, 1/horizon)`.
    pub fn new(
        h: &HydroState,
        v: &PotentialField,
        xi: f64,
        m: &MassTensor,
        dt: f64,
        horizon: f64,
        blowup: f64,
    ) -> Result<Self, PropagationError> {
        if h.chart() != PhaseChart::Continuous {
            return Err(PropagationError::PrincipalPhase);
        }
        if v.grid() != h.grid() {
            return Err(PropagationError::GridMismatch);
        }
        if m.dims() != h.grid().dims() {
            return Err(ModelError::ShapeMismatch {
                expected: h.grid().dims(),
                got: m.dims(),
            }
            .into());
        }
        let norm = h.mass();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(PropagationError::NotNormalized { norm });
        }
        let flow = HamiltonFlow {
            spectral: Spectral::new(h.grid()),
            potential: v.values().to_vec(),
            xi,
            inv_m: (0..m.dims()).map(|a| m.inverse(a)).collect(),
        };
        let g0 = flow.velocity_gradient(h.rho(), h.phi_big());
        let reference = if horizon > 0.0 { g0.max(1.0 / horizon) } else { g0 };
        Ok(Self {
            flow,
            rho: h.rho().to_vec(),
            phi: h.phi_big().to_vec(),
            time: 0.0,
            dt,
            steps: 0,
            gradient_ref: reference,
            blowup,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Current density, negative round-off included (see [`state`](Self::state)).
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn spectral(&self) -> &Spectral {
        &self.flow.spectral
    }

    /// Stable RK4 sub-step count for one step of size `dt`: advection at the
    /// largest characteristic speed (the box edges included, where `ρ ≈ 0`
    /// but round-off still grows) plus, for `ξ > 0`, dispersion at the
    /// Nyquist wavenumber.
    fn substeps(&self) -> usize {
        let grid = self.flow.spectral.grid();
        let mut rate = 0.0;
        for a in 0..grid.dims() {
            let k_max = std::f64::consts::PI / grid.spacing(a);
            let inv_m = self.flow.inv_m[a];
            let w = stencil::first_derivative(grid, &self.phi, a);
            let v_max = w.iter().fold(0.0f64, |acc, w| acc.max((w * inv_m).abs()));
            rate += k_max * v_max + (8.0 * self.flow.xi).sqrt() * k_max * k_max * inv_m * 0.5;
        }
        ((self.dt * rate / RK4_CFL).ceil() as usize).max(1)
    }

    fn rk4(&mut self, h: f64) {
        let n = self.rho.len();
        let shifted = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
            base.iter().zip(k).map(|(b, k)| b + c * k).collect()
        };
        let (k1r, k1p) = self.flow.rhs(&self.rho, &self.phi);
        let (k2r, k2p) = self
            .flow
            .rhs(&shifted(&self.rho, &k1r, 0.5 * h), &shifted(&self.phi, &k1p, 0.5 * h));
        let (k3r, k3p) = self
            .flow
            .rhs(&shifted(&self.rho, &k2r, 0.5 * h), &shifted(&self.phi, &k2p, 0.5 * h));
        let (k4r, k4p) = self
            .flow
            .rhs(&shifted(&self.rho, &k3r, h), &shifted(&self.phi, &k3p, h));
        for i in 0..n {
            self.rho[i] += h / 6.0 * (k1r[i] + 2.0 * k2r[i] + 2.0 * k3r[i] + k4r[i]);
            self.phi[i] += h / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
        }
    }

    /// Advance by `dt` (in as many RK4 sub-steps as stability needs), then
    /// check for a caustic.
    pub fn step(&mut self) -> Result<(), PropagationError> {
        let m = self.substeps();
        let h = self.dt / m as f64;
        for _ in 0..m {
            self.rk4(h);
        }
        self.time = (self.steps + 1) as f64 * self.dt;
        self.steps += 1;
        if self.rho.iter().chain(&self.phi).any(|x| !x.is_finite()) {
            return Err(PropagationError::NonFinite { time: self.time });
        }
        let g = self.flow.velocity_gradient(&self.rho, &self.phi);
        if self.gradient_ref > 0.0 && g > self.blowup * self.gradient_ref {
            return Err(PropagationError::CausticDetected {
                time: self.time,
                growth: g / self.gradient_ref,
            });
        }
        Ok(())
    }

    /// Current state; round-off negatives in the far tails are clipped to zero.
    pub fn state(&self) -> HydroState {
        let rho = self.rho.iter().map(|r| r.max(0.0)).collect();
        HydroState::from_parts_unchecked(
            self.flow.spectral.grid().clone(),
            rho,
            self.phi.clone(),
            PhaseChart::Continuous,
        )
    }
}

/// `ξ = 0` evolution: continuity plus classical Hamilton–Jacobi, RK4 in time.
pub fn propagate_hybrid(
    h: &HydroState,
    v: &PotentialField,
    p: &ValidatedParameters,
    m: &MassTensor,
    t_final: f64,
) -> Result<(HydroState, PropagationReport), PropagationError> {
    propagate_hybrid_with(h, v, p, m, t_final, CAUSTIC_BLOWUP)
}

pub fn propagate_hybrid_with(
    h: &HydroState,
    v: &PotentialField,
    p: &ValidatedParameters,
    m: &MassTensor,
    t_final: f64,
    blowup: f64,
) -> Result<(HydroState, PropagationReport), PropagationError> {
    if p.xi() != 0.0 {
        return Err(PropagationError::XiNonZero { xi: p.xi() });
    }
    check_duration(t_final)?;
    let h = h.unwrapped(p.hbar());
    let n = step_count(t_final, p.dt_field());
    let mut report = PropagationReport::default();
    if n == 0 {
        let norm = h.mass();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(PropagationError::NotNormalized { norm });
        }
        return Ok((h, report));
    }
    let mut evo = HydroEvolution::new(&h, v, 0.0, m, t_final / n as f64, t_final, blowup)?;
    let e0 = ensemble_hamiltonian(&h, v, p, m);
    let norm0 = h.mass();
    for _ in 0..n {
        evo.step()?;
        let s = evo.state();
        report.observe(s.mass(), norm0, ensemble_hamiltonian(&s, v, p, m), e0);
        report.steps_taken += 1;
    }
    let out = evo.state();
    let norm = out.mass();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(PropagationError::NotNormalized { norm });
    }
    Ok((out, report))
}

/// `H̃[ρ,Φ] = ∫ ½ρ m^{AB}∂_AΦ∂_BΦ + ρV + ξ m^{AB} (1/ρ) ∂_Aρ ∂_Bρ`.
///
/// `∇Φ` follows the state's phase chart, `∇ρ` is spectral and `ρ` is floored
/// in the quantum-potential term.
pub fn ensemble_hamiltonian(
    h: &HydroState,
    v: &PotentialField,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> f64 {
    let spectral = Spectral::new(h.grid());
    ensemble_hamiltonian_with(&spectral, h, v, p.hbar(), p.xi(), m)
}

pub(crate) fn ensemble_hamiltonian_with(
    spectral: &Spectral,
    h: &HydroState,
    v: &PotentialField,
    hbar: f64,
    xi: f64,
    m: &MassTensor,
) -> f64 {
    let grid = h.grid();
    let rho = h.rho();
    let floor = density_floor(rho).max(f64::MIN_POSITIVE);
    let mut acc: f64 = rho.iter().zip(v.values()).map(|(r, v)| r * v).sum();
    let grad = phase_gradient(h, hbar, spectral);
    for (a, g) in grad.iter().enumerate() {
        let inv_m = m.inverse(a);
        acc += 0.5 * inv_m * rho.iter().zip(g).map(|(r, g)| r * g * g).sum::<f64>();
        if xi > 0.0 {
            let d = spectral.derivative_real(rho, a);
            acc += xi * inv_m * d.iter().zip(rho).map(|(d, r)| d * d / r.max(floor)).sum::<f64>();
        }
    }
    acc * grid.cell_volume()
}

/// Outcome of [`check_xi_equivalence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiEquivalence {
    /// `max |ρ_linear − ρ_hamilton|` at the final common time.
    pub discrepancy: f64,
    pub hbar_eff: f64,
    pub steps: usize,
    /// Set when the direct integrator stopped early at a caustic.
    pub caustic_time: Option<f64>,
}

/// Cross-validate the linear solver against a direct integration of the
/// Hamilton pair for the same `ξ > 0`.
pub fn check_xi_equivalence(
    h0: &HydroState,
    v: &PotentialField,
    xi: f64,
    m: &MassTensor,
    dt: f64,
    t: f64,
) -> Result<XiEquivalence, PropagationError> {
    if !(xi > 0.0) {
        return Err(PropagationError::XiZero);
    }
    check_duration(t)?;
    if h0.chart() != PhaseChart::Continuous {
        return Err(PropagationError::PrincipalPhase);
    }
    let hbar_eff = (8.0 * xi).sqrt();
    let n = step_count(t, dt);
    if n == 0 {
        return Ok(XiEquivalence {
            discrepancy: 0.0,
            hbar_eff,
            steps: 0,
            caustic_time: None,
        });
    }
    let dt = t / n as f64;
    let linear = LinearPropagator::new(v, hbar_eff, m, dt)?;
    let mut psi = to_wavefunction_with_hbar(h0, hbar_eff).into_values();
    let mut hydro = HydroEvolution::new(h0, v, xi, m, dt, t, CAUSTIC_BLOWUP)?;
    let mut caustic_time = None;
    let mut steps = 0;
    for _ in 0..n {
        match hydro.step() {
            Ok(()) => {}
            Err(PropagationError::CausticDetected { time, .. }) => {
                caustic_time = Some(time);
            }
            Err(e) => return Err(e),
        }
        linear.step(&mut psi);
        steps += 1;
        if caustic_time.is_some() {
            break;
        }
    }
    let discrepancy = psi
        .iter()
        .zip(hydro.rho())
        .map(|(z, r)| (z.norm_sqr() - r).abs())
        .fold(0.0, f64::max);
    Ok(XiEquivalence {
        discrepancy,
        hbar_eff,
        steps,
        caustic_time,
    })
}
