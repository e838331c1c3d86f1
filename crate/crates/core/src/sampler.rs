//! Particle sector: the one-step Gaussian transition kernel, Euler–Maruyama
//! ensembles for finite `α′` and RK4 Bohmian trajectories for `α′ = ∞`.
//!
//! Every trajectory owns a ChaCha stream seeded from `(master seed, index)`,
//! so the output does not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    trajectory_seed, velocity_fields_from_hydro, velocity_fields_with_hbar, AlphaPrime, Grid,
    HydroState, MassTensor, ModelError, TrajectoryEnsemble, ValidatedParameters, VelocityFields,
    WaveFunction,
};
use crate::propagator::step_count;
use crate::spectral::Spectral;

/// Drift components are clamped to `DRIFT_CLAMP · L_A / dt_particle`.
pub const DRIFT_CLAMP: f64 = 10.0;

// keeps initial-condition draws off the per-trajectory noise streams
const INIT_SALT: u64 = 0x5a3c_96e1_0f2b_d847;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("no field frames")]
    NoFrames,
    #[error("frame times must be finite and strictly increasing")]
    FrameTimes,
    #[error("ensemble time {ensemble} is outside the frame span [{first}, {last}]")]
    TimeMismatch { ensemble: f64, first: f64, last: f64 },
    #[error("initial position of trajectory {0} lies outside the grid")]
    OutsideGrid(usize),
    #[error("Bohmian integration needs alpha' = infinite")]
    NotBohmian,
    #[error("invalid density for sampling: {0}")]
    BadDensity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean and diagonal covariance of one Gaussian step `Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub mean_step: Vec<f64>,
    pub covariance_diag: Vec<f64>,
}

/// Kernel from the raw multipliers: `α_n = m_n/(η Δt)`, mean `α′ ∂φ / α_n`,
/// variance `1/α_n` (finite `α′` only).
pub fn kernel_from_multipliers(
    grad_phi: &[f64],
    eta: f64,
    alpha_prime: f64,
    m: &MassTensor,
    dt: f64,
) -> KernelSpec {
    let mut mean_step = Vec::with_capacity(grad_phi.len());
    let mut covariance_diag = Vec::with_capacity(grad_phi.len());
    for (a, g) in grad_phi.iter().enumerate() {
        let alpha_n = m.mass(a) / (eta * dt);
        mean_step.push(alpha_prime * g / alpha_n);
        covariance_diag.push(1.0 / alpha_n);
    }
    KernelSpec {
        mean_step,
        covariance_diag,
    }
}

/// Kernel in the rescaled form `η = η̃/α′`: mean `η̃ m⁻¹ ∂φ Δt`, variance `(η̃/α′) m⁻¹ Δt`.
///
/// The kernel depends on position only through `grad_phi`; `_x` is kept so
/// callers can pass the point the gradient was evaluated at.
pub fn transition_kernel(
    _x: &[f64],
    grad_phi: &[f64],
    p: &ValidatedParameters,
    m: &MassTensor,
    dt: f64,
) -> KernelSpec {
    let eta_tilde = p.eta_tilde();
    let mean_step = grad_phi
        .iter()
        .enumerate()
        .map(|(a, g)| eta_tilde * m.inverse(a) * g * dt)
        .collect();
    let covariance_diag = (0..grad_phi.len())
        .map(|a| match p.alpha_prime() {
            AlphaPrime::Finite(alpha) => eta_tilde / alpha * m.inverse(a) * dt,
            AlphaPrime::Infinite => 0.0,
        })
        .collect();
    KernelSpec {
        mean_step,
        covariance_diag,
    }
}

/// Draw `Δx = mean + N(0, diag cov)`; zero-variance axes return the mean without drawing.
pub fn sample_step<R: Rng + ?Sized>(k: &KernelSpec, rng: &mut R) -> Vec<f64> {
    k.mean_step
        .iter()
        .zip(&k.covariance_diag)
        .map(|(&mu, &var)| {
            if var > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                mu + var.sqrt() * z
            } else {
                mu
            }
        })
        .collect()
}

/// Velocity-field snapshots at increasing times; particles see the nearest one.
#[derive(Debug, Clone)]
pub struct FieldFrames {
    times: Vec<f64>,
    fields: Vec<VelocityFields>,
}

impl FieldFrames {
    pub fn new(times: Vec<f64>, fields: Vec<VelocityFields>) -> Result<Self, SamplerError> {
        if times.is_empty() {
            return Err(SamplerError::NoFrames);
        }
        if times.len() != fields.len() {
            return Err(ModelError::ShapeMismatch {
                expected: times.len(),
                got: fields.len(),
            }
            .into());
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SamplerError::FrameTimes);
        }
        Ok(Self { times, fields })
    }

    pub fn from_wavefunctions(
        times: Vec<f64>,
        psis: &[WaveFunction],
        p: &ValidatedParameters,
        m: &MassTensor,
    ) -> Result<Self, SamplerError> {
        Self::from_wavefunctions_with_hbar(times, psis, p.hbar(), p, m)
    }

    /// Frames from wavefunctions whose phase is `Φ/hbar` (e.g. `ħ_eff` from the linear solver).
    pub fn from_wavefunctions_with_hbar(
        times: Vec<f64>,
        psis: &[WaveFunction],
        hbar: f64,
        p: &ValidatedParameters,
        m: &MassTensor,
    ) -> Result<Self, SamplerError> {
        let Some(first) = psis.first() else {
            return Err(SamplerError::NoFrames);
        };
        let spectral = Spectral::new(first.grid());
        let fields = psis
            .iter()
            .map(|psi| velocity_fields_with_hbar(&spectral, psi, hbar, p, m))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(times, fields)
    }

    pub fn from_hydro(
        times: Vec<f64>,
        states: &[HydroState],
        p: &ValidatedParameters,
        m: &MassTensor,
    ) -> Result<Self, SamplerError> {
        let Some(first) = states.first() else {
            return Err(SamplerError::NoFrames);
        };
        let spectral = Spectral::new(first.grid());
        let fields = states
            .iter()
            .map(|h| velocity_fields_from_hydro(&spectral, h, p, m))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(times, fields)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[VelocityFields] {
        &self.fields
    }

    pub fn grid(&self) -> &Grid {
        &self.fields[0].grid
    }

    pub fn into_fields(self) -> Vec<VelocityFields> {
        self.fields
    }

    /// Frame nearest to `t`; ties go to the earlier frame.
    pub fn nearest(&self, t: f64) -> &VelocityFields {
        let k = self.times.partition_point(|&tk| tk < t);
        if k == 0 {
            return &self.fields[0];
        }
        if k == self.times.len() {
            return &self.fields[k - 1];
        }
        if t - self.times[k - 1] <= self.times[k] - t {
            &self.fields[k - 1]
        } else {
            &self.fields[k]
        }
    }
}

/// Finished ensemble plus the bookkeeping of the near-node safeguards.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    pub ensemble: TrajectoryEnsemble,
    pub clamp_events: u64,
    /// Trajectories frozen after meeting a non-finite drift.
    pub aborted: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    EulerMaruyama,
    Rk4,
}

/// Streams an ensemble forward one field interval at a time, keeping each
/// trajectory's random stream between calls.
pub struct EnsembleStepper {
    grid: Grid,
    scheme: Scheme,
    dims: usize,
    positions: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    aborted: Vec<bool>,
    /// `(η̃/α′)/m_A`: noise variance per unit time.
    diffusion: Vec<f64>,
    clamp: Vec<f64>,
    dt: f64,
    time: f64,
    clamp_events: u64,
}

impl EnsembleStepper {
    /// Euler–Maruyama stepping of `dx = b dt + √((η̃/α′) dt/m) ξ`.
    pub fn stochastic(
        grid: &Grid,
        init: &TrajectoryEnsemble,
        p: &ValidatedParameters,
        m: &MassTensor,
    ) -> Result<Self, SamplerError> {
        Self::build(grid, init, p, m, Scheme::EulerMaruyama)
    }

    /// RK4 stepping of `dx = v dt`; needs `α′ = ∞`.
    pub fn bohmian(
        grid: &Grid,
        init: &TrajectoryEnsemble,
        p: &ValidatedParameters,
        m: &MassTensor,
    ) -> Result<Self, SamplerError> {
        if !p.alpha_prime().is_infinite() {
            return Err(SamplerError::NotBohmian);
        }
        Self::build(grid, init, p, m, Scheme::Rk4)
    }

    fn build(
        grid: &Grid,
        init: &TrajectoryEnsemble,
        p: &ValidatedParameters,
        m: &MassTensor,
        scheme: Scheme,
    ) -> Result<Self, SamplerError> {
        let dims = grid.dims();
        if init.dims() != dims || m.dims() != dims {
            return Err(ModelError::ShapeMismatch {
                expected: dims,
                got: if init.dims() != dims { init.dims() } else { m.dims() },
            }
            .into());
        }
        let positions = init.last_positions().to_vec();
        if let Some(i) = positions.chunks(dims).position(|x| !grid.contains(x)) {
            return Err(SamplerError::OutsideGrid(i));
        }
        let dt = p.dt_particle();
        let diffusion = (0..dims)
            .map(|a| match p.alpha_prime() {
                AlphaPrime::Finite(alpha) => p.eta_tilde() / alpha * m.inverse(a),
                AlphaPrime::Infinite => 0.0,
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            scheme,
            dims,
            rngs: init
                .per_traj_seeds()
                .iter()
                .map(|&s| ChaCha8Rng::seed_from_u64(s))
                .collect(),
            aborted: vec![false; init.n_traj()],
            positions,
            diffusion,
            clamp: (0..dims)
                .map(|a| DRIFT_CLAMP * grid.extents()[a] / dt)
                .collect(),
            dt,
            time: *init.frames().last().unwrap(),
            clamp_events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub fn aborted(&self) -> Vec<usize> {
        (0..self.aborted.len()).filter(|&i| self.aborted[i]).collect()
    }

    /// Advance every live trajectory to `t_end` in equal sub-steps no longer
    /// than `dt_particle`, using the frames nearest in time.
    pub fn advance(&mut self, frames: &FieldFrames, t_end: f64) -> Result<(), SamplerError> {
        if frames.grid() != &self.grid {
            return Err(ModelError::InvalidGrid("field frames live on a different grid".into()).into());
        }
        let span = t_end - self.time;
        if !(span >= 0.0) {
            return Err(SamplerError::TimeMismatch {
                ensemble: self.time,
                first: frames.times()[0],
                last: *frames.times().last().unwrap(),
            });
        }
        let n = step_count(span, self.dt);
        if n == 0 {
            return Ok(());
        }
        let h = span / n as f64;
        let t0 = self.time;
        let ctx = StepContext {
            grid: &self.grid,
            frames,
            clamp: &self.clamp,
            diffusion: &self.diffusion,
            dims: self.dims,
        };
        let scheme = self.scheme;
        let events: u64 = self
            .positions
            .par_chunks_mut(self.dims)
            .zip(self.rngs.par_iter_mut())
            .zip(self.aborted.par_iter_mut())
            .map(|((x, rng), dead)| {
                if *dead {
                    return 0;
                }
                let mut clamps = 0u64;
                for j in 0..n {
                    let t = t0 + j as f64 * h;
                    let ok = match scheme {
                        Scheme::EulerMaruyama => ctx.em_step(x, t, h, rng, &mut clamps),
                        Scheme::Rk4 => ctx.rk4_step(x, t, h, &mut clamps),
                    };
                    if !ok {
                        *dead = true;
                        break;
                    }
                }
                clamps
            })
            .sum();
        self.clamp_events += events;
        self.time = t_end;
        Ok(())
    }
}

struct StepContext<'a> {
    grid: &'a Grid,
    frames: &'a FieldFrames,
    clamp: &'a [f64],
    diffusion: &'a [f64],
    dims: usize,
}

impl StepContext<'_> {
    /// Interpolated drift (EM) or current velocity (RK4), clamped; `false` on non-finite values.
    fn velocity(&self, x: &[f64], t: f64, current: bool, out: &mut [f64], clamps: &mut u64) -> bool {
        let f = self.frames.nearest(t);
        let comps = if current { &f.current_v } else { &f.drift_b };
        for a in 0..self.dims {
            let mut b = self.grid.interpolate(&comps[a], x);
            if !b.is_finite() {
                return false;
            }
            if b.abs() > self.clamp[a] {
                b = b.signum() * self.clamp[a];
                *clamps += 1;
            }
            out[a] = b;
        }
        true
    }

    fn wrap(&self, x: &mut [f64]) {
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = self.grid.wrap(a, *xa);
        }
    }

    fn em_step(&self, x: &mut [f64], t: f64, h: f64, rng: &mut ChaCha8Rng, clamps: &mut u64) -> bool {
        let mut b = [0.0; 8];
        if !self.velocity(x, t, false, &mut b, clamps) {
            return false;
        }
        for a in 0..self.dims {
            let mut dx = b[a] * h;
            if self.diffusion[a] > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                dx += (self.diffusion[a] * h).sqrt() * z;
            }
            x[a] += dx;
        }
        self.wrap(x);
        true
    }

    fn rk4_step(&self, x: &mut [f64], t: f64, h: f64, clamps: &mut u64) -> bool {
        let d = self.dims;
        let (mut k1, mut k2, mut k3, mut k4) = ([0.0; 8], [0.0; 8], [0.0; 8], [0.0; 8]);
        let mut y = [0.0; 8];
        if !self.velocity(x, t, true, &mut k1, clamps) {
            return false;
        }
        (0..d).for_each(|a| y[a] = x[a] + 0.5 * h * k1[a]);
        if !self.velocity(&y[..d], t + 0.5 * h, true, &mut k2, clamps) {
            return false;
        }
        (0..d).for_each(|a| y[a] = x[a] + 0.5 * h * k2[a]);
        if !self.velocity(&y[..d], t + 0.5 * h, true, &mut k3, clamps) {
            return false;
        }
        (0..d).for_each(|a| y[a] = x[a] + h * k3[a]);
        if !self.velocity(&y[..d], t + h, true, &mut k4, clamps) {
            return false;
        }
        for a in 0..d {
            x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        self.wrap(x);
        true
    }
}

fn run_over_frames(
    mut stepper: EnsembleStepper,
    frames: &FieldFrames,
    init: &TrajectoryEnsemble,
) -> Result<EnsembleOutcome, SamplerError> {
    let t0 = stepper.time();
    let times = frames.times();
    let (first, last) = (times[0], *times.last().unwrap());
    let tol = 1e-9 * (1.0 + last.abs());
    if t0 < first - tol || t0 > last + tol {
        return Err(SamplerError::TimeMismatch {
            ensemble: t0,
            first,
            last,
        });
    }
    let mut ensemble = init.clone();
    for &t in times.iter().filter(|&&t| t > t0 + tol) {
        stepper.advance(frames, t)?;
        ensemble.push_frame(t, stepper.positions().to_vec());
    }
    Ok(EnsembleOutcome {
        ensemble,
        clamp_events: stepper.clamp_events(),
        aborted: stepper.aborted(),
    })
}

/// Euler–Maruyama ensemble driven by `b = v − u`; records a frame at every
/// field time after the ensemble's current time.
pub fn evolve_ensemble(
    frames: &FieldFrames,
    init: &TrajectoryEnsemble,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<EnsembleOutcome, SamplerError> {
    let stepper = EnsembleStepper::stochastic(frames.grid(), init, p, m)?;
    run_over_frames(stepper, frames, init)
}

/// Deterministic RK4 trajectories of `dx/dt = v`; needs `α′ = ∞`.
pub fn integrate_bohmian(
    frames: &FieldFrames,
    init: &TrajectoryEnsemble,
    p: &ValidatedParameters,
    m: &MassTensor,
) -> Result<EnsembleOutcome, SamplerError> {
    let stepper = EnsembleStepper::bohmian(frames.grid(), init, p, m)?;
    run_over_frames(stepper, frames, init)
}

fn cell_cdf(grid: &Grid, rho: &[f64]) -> Result<Vec<f64>, SamplerError> {
    if rho.len() != grid.len() {
        return Err(ModelError::ShapeMismatch {
            expected: grid.len(),
            got: rho.len(),
        }
        .into());
    }
    let mut acc = 0.0;
    let mut cdf = Vec::with_capacity(rho.len());
    for &r in rho {
        if !(r.is_finite() && r >= 0.0) {
            return Err(SamplerError::BadDensity(format!("value {r}")));
        }
        acc += r;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(SamplerError::BadDensity("zero total mass".into()));
    }
    cdf.iter_mut().for_each(|c| *c /= acc);
    Ok(cdf)
}

/// `n` i.i.d. draws from the cell-constant density: a cell by inverse CDF over
/// cell masses, then a uniform point inside the cell centred on that node.
pub fn sample_from_density(
    grid: &Grid,
    rho: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SamplerError> {
    let cdf = cell_cdf(grid, rho)?;
    let d = grid.dims();
    let mut out = vec![0.0; n * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, x)| {
        let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed ^ INIT_SALT, i));
        let u: f64 = rng.random();
        let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        for (a, xa) in x.iter_mut().enumerate() {
            let j: f64 = rng.random();
            let centre = grid.coordinate(a, grid.axis_index(cell, a));
            *xa = grid.wrap(a, centre + (j - 0.5) * grid.spacing(a));
        }
    });
    Ok(out)
}

/// Deterministic 1D positions at the quantiles `(i + ½)/n` of the cell-constant density.
pub fn quantile_positions(grid: &Grid, rho: &[f64], n: usize) -> Result<Vec<f64>, SamplerError> {
    if grid.dims() != 1 {
        return Err(ModelError::InvalidGrid("quantile placement is one-dimensional".into()).into());
    }
    let cdf = cell_cdf(grid, rho)?;
    let h = grid.spacing(0);
    Ok((0..n)
        .map(|i| {
            let q = (i as f64 + 0.5) / n as f64;
            let cell = cdf.partition_point(|&c| c < q).min(cdf.len() - 1);
            let lo = if cell == 0 { 0.0 } else { cdf[cell - 1] };
            let frac = if cdf[cell] > lo { (q - lo) / (cdf[cell] - lo) } else { 0.5 };
            grid.coordinate(0, cell) - 0.5 * h + frac * h
        })
        .collect())
}
