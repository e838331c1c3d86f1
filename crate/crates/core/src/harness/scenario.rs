//! Built-in scenarios: initial state, potential and analytic oracle.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::config::{PotentialForm, ScenarioConfig};
use super::error::HarnessError;
use crate::model::{to_wavefunction_with_hbar, Grid, HydroState, MassTensor, WaveFunction};
use crate::propagator::PotentialField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    FreeGaussian1d,
    HarmonicCoherent1d,
    Vortex2d,
    DoubleSlit2d,
    HybridFree1d,
    HybridHarmonic1d,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        Self::FreeGaussian1d,
        Self::HarmonicCoherent1d,
        Self::Vortex2d,
        Self::DoubleSlit2d,
        Self::HybridFree1d,
        Self::HybridHarmonic1d,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FreeGaussian1d => "free_gaussian_1d",
            Self::HarmonicCoherent1d => "harmonic_coherent_1d",
            Self::Vortex2d => "vortex_2d",
            Self::DoubleSlit2d => "double_slit_2d",
            Self::HybridFree1d => "hybrid_free_1d",
            Self::HybridHarmonic1d => "hybrid_harmonic_1d",
        }
    }

    pub fn dims(self) -> usize {
        match self {
            Self::Vortex2d | Self::DoubleSlit2d => 2,
            _ => 1,
        }
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, Self::HybridFree1d | Self::HybridHarmonic1d)
    }

    fn default_form(self) -> PotentialForm {
        match self {
            Self::FreeGaussian1d | Self::HybridFree1d => PotentialForm::None,
            Self::HarmonicCoherent1d | Self::Vortex2d | Self::HybridHarmonic1d => PotentialForm::Harmonic,
            Self::DoubleSlit2d => PotentialForm::DoubleSlit,
        }
    }

    pub(crate) fn apply_defaults(self, c: &mut ScenarioConfig) {
        let (points, extents, t_final): (Vec<usize>, Vec<f64>, f64) = match self {
            Self::FreeGaussian1d => (vec![256], vec![40.0], 1.0),
            Self::HarmonicCoherent1d => (vec![256], vec![20.0], 1.0),
            Self::Vortex2d => (vec![128, 128], vec![16.0, 16.0], 1.0),
            Self::DoubleSlit2d => (vec![128, 128], vec![32.0, 32.0], 2.0),
            Self::HybridFree1d => (vec![256], vec![40.0], 2.0),
            Self::HybridHarmonic1d => (vec![256], vec![20.0], 1.0),
        };
        let d = self.dims();
        c.grid.points.get_or_insert(points);
        c.grid.extents.get_or_insert(extents);
        c.run.t_final.get_or_insert(t_final);
        let hbar = c.params.hbar;
        let xi = *c.params.xi.get_or_insert(if self.is_hybrid() { 0.0 } else { hbar * hbar / 8.0 });
        c.params.masses.get_or_insert_with(|| vec![1.0; d]);
        let form = *c.potential.form.get_or_insert(self.default_form());
        if form == PotentialForm::Harmonic {
            c.potential
                .omega
                .get_or_insert(if self == Self::Vortex2d { 0.5 } else { 1.0 });
        }
        if form == PotentialForm::DoubleSlit {
            c.potential.barrier_height.get_or_insert(100.0);
            c.potential.barrier_position.get_or_insert(0.0);
            c.potential.barrier_thickness.get_or_insert(0.5);
            c.potential.slit_separation.get_or_insert(4.0);
            c.potential.slit_width.get_or_insert(1.0);
        }
        let s = &mut c.state;
        match self {
            Self::Vortex2d => {
                s.winding.get_or_insert(1);
                // stationary width for the harmonic trap: s² = ħ_eff / (2 m ω)
                let omega = c.potential.omega.unwrap_or(0.5);
                let m = c.params.masses.as_ref().map_or(1.0, |m| m[0]);
                s.width.get_or_insert(((8.0 * xi).sqrt() / (2.0 * m * omega)).sqrt());
                c.diagnostics.loop_radius.get_or_insert(2.0);
            }
            Self::DoubleSlit2d => {
                s.width.get_or_insert(1.5);
                s.center.get_or_insert(vec![-8.0, 0.0]);
                s.momentum.get_or_insert(vec![3.0, 0.0]);
            }
            Self::HarmonicCoherent1d => {
                let omega = c.potential.omega.unwrap_or(1.0);
                let m = c.params.masses.as_ref().map_or(1.0, |m| m[0]);
                s.width.get_or_insert(((8.0 * xi).sqrt() / (2.0 * m * omega)).sqrt());
                s.center.get_or_insert(vec![2.0]);
                s.momentum.get_or_insert(vec![0.0]);
            }
            Self::HybridFree1d => {
                s.width.get_or_insert(1.0);
                s.center.get_or_insert(vec![-5.0]);
                s.momentum.get_or_insert(vec![1.5]);
            }
            Self::FreeGaussian1d | Self::HybridHarmonic1d => {
                s.width.get_or_insert(1.0);
                s.center.get_or_insert(vec![0.0; d]);
                s.momentum.get_or_insert(vec![0.0; d]);
            }
        }
    }

    pub(crate) fn validate_specific(self, c: &ScenarioConfig) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::Validation(m));
        let d = self.dims();
        let s = &c.state;
        match s.width {
            Some(w) if w > 0.0 && w.is_finite() => {}
            w => return invalid(format!("state.width must be positive, got {w:?}")),
        }
        if self == Self::Vortex2d {
            if s.center.is_some() || s.momentum.is_some() {
                return invalid("vortex_2d is centred at the origin at rest; drop state.center/momentum".into());
            }
        } else {
            if s.winding.is_some() {
                return invalid(format!("state.winding only applies to vortex_2d, not {}", self.name()));
            }
            for (key, v) in [("center", &s.center), ("momentum", &s.momentum)] {
                match v {
                    Some(v) if v.len() == d && v.iter().all(|x| x.is_finite()) => {}
                    _ => return invalid(format!("state.{key} needs {d} finite entries")),
                }
            }
        }
        let p = &c.potential;
        match p.form.expect("resolved") {
            PotentialForm::Harmonic => match p.omega {
                Some(w) if w > 0.0 && w.is_finite() => {}
                w => return invalid(format!("potential.omega must be positive, got {w:?}")),
            },
            PotentialForm::Polynomial => {
                if p.coefficients.as_ref().is_none_or(|c| c.is_empty()) {
                    return invalid("polynomial potential needs coefficients".into());
                }
            }
            PotentialForm::DoubleSlit => {
                if d != 2 {
                    return invalid("double_slit potential needs a 2-axis grid".into());
                }
                for (key, v) in [
                    ("barrier_thickness", p.barrier_thickness),
                    ("slit_width", p.slit_width),
                    ("barrier_height", p.barrier_height),
                ] {
                    if !v.is_some_and(|v| v > 0.0) {
                        return invalid(format!("potential.{key} must be positive"));
                    }
                }
                if p.barrier_position.is_none() || !p.slit_separation.is_some_and(|v| v >= 0.0) {
                    return invalid("double slit needs barrier_position and slit_separation".into());
                }
            }
            PotentialForm::None => {}
        }
        Ok(())
    }
}

/// Initial field state: a wavefunction (`ξ > 0`) or a hydrodynamic pair (hybrid).
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Wave(WaveFunction),
    Hydro(HydroState),
}

impl InitialState {
    pub fn density(&self) -> Vec<f64> {
        match self {
            Self::Wave(psi) => psi.density(),
            Self::Hydro(h) => h.rho().to_vec(),
        }
    }
}

/// Analytic reference solution of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    /// Gaussian with linear initial phase under `V = ½mω²x²` (`ω = 0`: free).
    Gaussian { center: f64, momentum: f64, width: f64, mass: f64, hbar: f64, omega: f64 },
    /// Stationary `(x + iy)^ℓ e^{-r²/4s²}` in the matching isotropic trap.
    Vortex { winding: u32, width: f64, mass: f64, hbar: f64 },
    /// Hybrid (`ξ = 0`) Gaussian carried by classical characteristics.
    Classical { center: f64, momentum: f64, width: f64, mass: f64, omega: f64 },
    /// No closed form (double slit, non-canonical potentials).
    None,
}

fn normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

/// `(cos ωt, sin(ωt)/ω)`, with the free limit at `ω = 0`.
fn harmonic_phases(omega: f64, t: f64) -> (f64, f64) {
    if omega == 0.0 {
        (1.0, t)
    } else {
        ((omega * t).cos(), (omega * t).sin() / omega)
    }
}

impl Oracle {
    pub fn is_some(&self) -> bool {
        !matches!(self, Self::None)
    }

    /// Centre of the packet (per axis).
    pub fn center(&self, t: f64) -> Option<Vec<f64>> {
        match *self {
            Self::Gaussian { center, momentum, mass, omega, .. }
            | Self::Classical { center, momentum, mass, omega, .. } => {
                let (c, s) = harmonic_phases(omega, t);
                Some(vec![center * c + momentum / mass * s])
            }
            Self::Vortex { .. } => Some(vec![0.0, 0.0]),
            Self::None => None,
        }
    }

    /// Standard deviation of the packet (per axis).
    pub fn width(&self, t: f64) -> Option<Vec<f64>> {
        match *self {
            Self::Gaussian { width, mass, hbar, omega, .. } => {
                let (c, s) = harmonic_phases(omega, t);
                let spread = hbar / (2.0 * mass * width);
                Some(vec![((width * c).powi(2) + (spread * s).powi(2)).sqrt()])
            }
            Self::Classical { width, omega, .. } => {
                let (c, _) = harmonic_phases(omega, t);
                Some(vec![width * c.abs()])
            }
            Self::Vortex { winding, width, .. } => {
                // ⟨x²⟩ = (ℓ + 1) s²
                let s = width * ((winding + 1) as f64).sqrt();
                Some(vec![s, s])
            }
            Self::None => None,
        }
    }

    pub fn density(&self, x: &[f64], t: f64) -> Option<f64> {
        match *self {
            Self::Gaussian { .. } | Self::Classical { .. } => {
                let c = self.center(t)?[0];
                let s = self.width(t)?[0];
                Some(normal_pdf(x[0], c, s))
            }
            Self::Vortex { winding, width, .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let l = winding as i32;
                let factorial: f64 = (1..=winding).map(f64::from).product();
                let norm = PI * (2.0 * width * width).powi(l + 1) * factorial;
                Some(r2.powi(l) * (-r2 / (2.0 * width * width)).exp() / norm)
            }
            Self::None => None,
        }
    }

    /// Position at `t` of the (deterministic-limit) trajectory starting at `x0`.
    pub fn trajectory(&self, x0: &[f64], t: f64) -> Option<Vec<f64>> {
        match *self {
            Self::Gaussian { center, width, .. } => {
                let c = self.center(t)?[0];
                let s = self.width(t)?[0];
                Some(vec![c + (x0[0] - center) * s / width])
            }
            Self::Classical { momentum, mass, omega, .. } => {
                let (c, s) = harmonic_phases(omega, t);
                Some(vec![x0[0] * c + momentum / mass * s])
            }
            Self::Vortex { winding, mass, hbar, .. } => {
                let r2 = x0[0] * x0[0] + x0[1] * x0[1];
                let th = winding as f64 * hbar * t / (mass * r2);
                let (sn, cs) = th.sin_cos();
                Some(vec![cs * x0[0] - sn * x0[1], sn * x0[0] + cs * x0[1]])
            }
            Self::None => None,
        }
    }

    pub fn winding(&self) -> Option<i64> {
        match *self {
            Self::Vortex { winding, .. } => Some(winding as i64),
            Self::Gaussian { .. } => Some(0),
            _ => None,
        }
    }

    /// First crossing of classical characteristics, if any.
    pub fn caustic_time(&self) -> Option<f64> {
        match *self {
            Self::Classical { omega, .. } if omega > 0.0 => Some(PI / (2.0 * omega)),
            _ => None,
        }
    }
}

/// Everything needed to run a scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub grid: Grid,
    pub masses: MassTensor,
    pub potential: PotentialField,
    pub initial: InitialState,
    pub oracle: Oracle,
    /// Phase unit of the wavefunction frames (`ħ_eff`); unused for hybrids.
    pub hbar_eff: f64,
}

fn build_potential(c: &ScenarioConfig, grid: &Grid, m: &MassTensor) -> Result<PotentialField, HarnessError> {
    let p = &c.potential;
    let v = match p.form.expect("resolved") {
        PotentialForm::None => PotentialField::zero(grid),
        PotentialForm::Harmonic => PotentialField::harmonic(grid, m, p.omega.expect("validated")),
        PotentialForm::Polynomial => {
            let coeffs = p.coefficients.clone().expect("validated");
            PotentialField::from_fn(grid, |x| {
                x.iter()
                    .map(|&xa| coeffs.iter().rev().fold(0.0, |acc, c| acc * xa + c))
                    .sum()
            })?
        }
        PotentialForm::DoubleSlit => {
            let height = p.barrier_height.unwrap();
            let pos = p.barrier_position.unwrap();
            let half_thick = 0.5 * p.barrier_thickness.unwrap();
            let half_sep = 0.5 * p.slit_separation.unwrap();
            let half_slit = 0.5 * p.slit_width.unwrap();
            PotentialField::from_fn(grid, |x| {
                let in_wall = (x[0] - pos).abs() <= half_thick;
                let in_slit = ((x[1] - half_sep).abs() < half_slit) || ((x[1] + half_sep).abs() < half_slit);
                if in_wall && !in_slit {
                    height
                } else {
                    0.0
                }
            })?
        }
    };
    Ok(v)
}

/// Instantiate the scenario described by a resolved config.
pub fn build_scenario(c: &ScenarioConfig) -> Result<Scenario, HarnessError> {
    let kind = ScenarioKind::parse(&c.scenario.name)
        .ok_or_else(|| HarnessError::UnsupportedScenario(c.scenario.name.clone()))?;
    let grid = c.grid();
    let masses = c.masses();
    let params = c.parameters();
    let potential = build_potential(c, &grid, &masses)?;
    let hbar_eff = params.hbar_eff();
    let s = &c.state;
    let width = s.width.expect("resolved");
    let form = c.potential.form.expect("resolved");
    let canonical = form == kind.default_form();
    let omega = match form {
        PotentialForm::Harmonic => c.potential.omega.unwrap(),
        _ => 0.0,
    };

    if kind == ScenarioKind::Vortex2d {
        let l = s.winding.expect("resolved") as i32;
        let psi = WaveFunction::from_fn(grid.clone(), |x| {
            Complex64::new(x[0], x[1]).powi(l) * (-(x[0] * x[0] + x[1] * x[1]) / (4.0 * width * width)).exp()
        })?;
        let m0 = masses.mass(0);
        let stationary = canonical
            && masses.mass(1) == m0
            && (width * width - hbar_eff / (2.0 * m0 * omega)).abs() < 1e-12 * width * width;
        let oracle = if stationary {
            Oracle::Vortex { winding: l as u32, width, mass: m0, hbar: hbar_eff }
        } else {
            Oracle::None
        };
        return Ok(Scenario {
            kind,
            grid,
            masses,
            potential,
            initial: InitialState::Wave(psi),
            oracle,
            hbar_eff,
        });
    }

    let center = s.center.clone().expect("resolved");
    let momentum = s.momentum.clone().expect("resolved");
    let rho = grid.map_nodes(|x| {
        x.iter()
            .zip(&center)
            .map(|(xa, ca)| (-(xa - ca).powi(2) / (2.0 * width * width)).exp())
            .product()
    });
    let phi = grid.map_nodes(|x| x.iter().zip(&momentum).map(|(xa, pa)| xa * pa).sum());
    let hydro = HydroState::normalized(grid.clone(), rho, phi)?;
    let m0 = masses.mass(0);
    let oracle = match kind {
        _ if !canonical => Oracle::None,
        ScenarioKind::FreeGaussian1d | ScenarioKind::HarmonicCoherent1d => Oracle::Gaussian {
            center: center[0],
            momentum: momentum[0],
            width,
            mass: m0,
            hbar: hbar_eff,
            omega,
        },
        ScenarioKind::HybridFree1d | ScenarioKind::HybridHarmonic1d => Oracle::Classical {
            center: center[0],
            momentum: momentum[0],
            width,
            mass: m0,
            omega,
        },
        _ => Oracle::None,
    };
    let initial = if kind.is_hybrid() {
        InitialState::Hydro(hydro)
    } else {
        InitialState::Wave(to_wavefunction_with_hbar(&hydro, hbar_eff))
    };
    Ok(Scenario {
        kind,
        grid,
        masses,
        potential,
        initial,
        oracle,
        hbar_eff,
    })
}
