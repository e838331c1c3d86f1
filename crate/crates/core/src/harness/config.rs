//! Declarative run configuration (TOML, strict).
//!
//! Scenario-dependent values may be omitted; [`load_config`] fills them from
//! the scenario's defaults so a loaded config is fully explicit and
//! re-serializes to an equivalent document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::HarnessError;
use super::scenario::ScenarioKind;
use crate::model::{validate_parameters, AlphaPrime, Grid, MassTensor, ModelParameters, ValidatedParameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<f64>>,
}

/// `alpha_prime = 10.0` or `alpha_prime = "infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaValue", into = "AlphaValue")]
pub struct AlphaSetting(pub AlphaPrime);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaValue {
    Number(f64),
    Word(String),
}

impl TryFrom<AlphaValue> for AlphaSetting {
    type Error = String;
    fn try_from(v: AlphaValue) -> Result<Self, String> {
        match v {
            AlphaValue::Number(x) => Ok(Self(AlphaPrime::Finite(x))),
            AlphaValue::Word(w) if w.eq_ignore_ascii_case("infinite") || w.eq_ignore_ascii_case("inf") => {
                Ok(Self(AlphaPrime::Infinite))
            }
            AlphaValue::Word(w) => Err(format!("alpha_prime must be a number or \"infinite\", got {w:?}")),
        }
    }
}

impl From<AlphaSetting> for AlphaValue {
    fn from(a: AlphaSetting) -> Self {
        match a.0 {
            AlphaPrime::Finite(x) => AlphaValue::Number(x),
            AlphaPrime::Infinite => AlphaValue::Word("infinite".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub eta_tilde: f64,
    #[serde(default = "default_alpha")]
    pub alpha_prime: AlphaSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization_n: Option<u32>,
    #[serde(default = "default_dt_field")]
    pub dt_field: f64,
    #[serde(default = "default_dt_particle")]
    pub dt_particle: f64,
    /// One mass per configuration axis; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            eta_tilde: 1.0,
            alpha_prime: default_alpha(),
            xi: None,
            quantization_n: None,
            dt_field: default_dt_field(),
            dt_particle: default_dt_particle(),
            masses: None,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_alpha() -> AlphaSetting {
    AlphaSetting(AlphaPrime::Finite(10.0))
}
fn default_dt_field() -> f64 {
    1e-2
}
fn default_dt_particle() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialForm {
    None,
    /// `½ m ω² |x|²`.
    Harmonic,
    /// `Σ_A Σ_k c_k x_A^k`.
    Polynomial,
    /// Wall at `x_0 = barrier_position` with two gaps along `x_1`.
    DoubleSlit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<PotentialForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_position: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_thickness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slit_separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slit_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Position-space standard deviation `s₀` of the initial packet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winding: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// i.i.d. draws from `ρ₀`.
    Density,
    /// Deterministic quantiles of `ρ₀` (1D only).
    Quantiles,
    /// `ensemble.positions`, flattened `[traj * D + axis]`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_init_mode")]
    pub init_mode: InitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_traj: default_n_traj(),
            master_seed: 0,
            init_mode: default_init_mode(),
            positions: None,
        }
    }
}

fn default_n_traj() -> usize {
    1000
}
fn default_init_mode() -> InitMode {
    InitMode::Density
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Record every `output_stride`-th field frame (the last one always).
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_final: None,
            output_stride: default_stride(),
        }
    }
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Fields,
    Trajectories,
    Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "all_artifacts")]
    pub artifacts: Vec<Artifact>,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            artifacts: all_artifacts(),
        }
    }
}

fn default_directory() -> String {
    "out".into()
}
fn all_artifacts() -> Vec<Artifact> {
    vec![Artifact::Fields, Artifact::Trajectories, Artifact::Diagnostics]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Radius of a circulation loop centred at the origin (2D only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_radius: Option<f64>,
    #[serde(default = "default_loop_vertices")]
    pub loop_vertices: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            loop_radius: None,
            loop_vertices: default_loop_vertices(),
        }
    }
}

fn default_bins() -> usize {
    64
}
fn default_loop_vertices() -> usize {
    crate::diagnostics::DEFAULT_LOOP_VERTICES
}

impl ScenarioConfig {
    pub fn kind(&self) -> ScenarioKind {
        ScenarioKind::parse(&self.scenario.name).expect("validated config")
    }

    pub fn grid(&self) -> Grid {
        Grid::new(
            self.grid.points.clone().expect("resolved"),
            self.grid.extents.clone().expect("resolved"),
        )
        .expect("validated grid")
    }

    pub fn masses(&self) -> MassTensor {
        MassTensor::new(self.params.masses.clone().expect("resolved")).expect("validated masses")
    }

    pub fn model_parameters(&self) -> ModelParameters {
        ModelParameters {
            hbar: self.params.hbar,
            eta_tilde: self.params.eta_tilde,
            alpha_prime: self.params.alpha_prime.0,
            xi: self.params.xi.expect("resolved"),
            quantization_n: self.params.quantization_n,
            dt_field: self.params.dt_field,
            dt_particle: self.params.dt_particle,
        }
    }

    pub fn parameters(&self) -> ValidatedParameters {
        validate_parameters(&self.model_parameters()).expect("validated parameters")
    }

    pub fn t_final(&self) -> f64 {
        self.run.t_final.expect("resolved")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with a different `α′`, everything else (η̃ included) held fixed.
    pub fn with_alpha_prime(&self, alpha: AlphaPrime) -> Result<Self, HarnessError> {
        let mut c = self.clone();
        c.params.alpha_prime = AlphaSetting(alpha);
        c.validate()?;
        Ok(c)
    }

    /// Fill scenario defaults, then check every invariant.
    pub fn resolve(mut self) -> Result<Self, HarnessError> {
        let kind = ScenarioKind::parse(&self.scenario.name)
            .ok_or_else(|| HarnessError::UnsupportedScenario(self.scenario.name.clone()))?;
        kind.apply_defaults(&mut self);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::Validation(msg));
        let kind = ScenarioKind::parse(&self.scenario.name)
            .ok_or_else(|| HarnessError::UnsupportedScenario(self.scenario.name.clone()))?;
        let (Some(points), Some(extents)) = (&self.grid.points, &self.grid.extents) else {
            return invalid("grid.points and grid.extents are required".into());
        };
        let grid = Grid::new(points.clone(), extents.clone())
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        if grid.dims() != kind.dims() {
            return invalid(format!(
                "{} needs a {}-axis grid, got {}",
                kind.name(),
                kind.dims(),
                grid.dims()
            ));
        }
        let Some(xi) = self.params.xi else {
            return invalid("params.xi is required".into());
        };
        if kind.is_hybrid() && xi != 0.0 {
            return invalid(format!("{} requires xi = 0, got {xi}", kind.name()));
        }
        if !kind.is_hybrid() && !(xi > 0.0) {
            return invalid(format!("{} requires xi > 0, got {xi}", kind.name()));
        }
        validate_parameters(&self.model_parameters()).map_err(|e| HarnessError::Validation(e.to_string()))?;
        let masses = self.params.masses.clone().unwrap_or_default();
        if masses.len() != grid.dims() {
            return invalid(format!("params.masses needs {} entries", grid.dims()));
        }
        MassTensor::new(masses).map_err(|e| HarnessError::Validation(e.to_string()))?;
        match self.run.t_final {
            Some(t) if t > 0.0 && t.is_finite() => {}
            t => return invalid(format!("run.t_final must be positive, got {t:?}")),
        }
        if self.run.output_stride == 0 {
            return invalid("run.output_stride must be at least 1".into());
        }
        if self.ensemble.n_traj == 0 {
            return invalid("ensemble.n_traj must be at least 1".into());
        }
        match self.ensemble.init_mode {
            InitMode::Explicit => {
                let n = self.ensemble.positions.as_ref().map_or(0, Vec::len);
                if n != self.ensemble.n_traj * grid.dims() {
                    return invalid(format!(
                        "explicit init needs n_traj * dims = {} positions, got {n}",
                        self.ensemble.n_traj * grid.dims()
                    ));
                }
                let pos = self.ensemble.positions.as_ref().unwrap();
                if pos.chunks(grid.dims()).any(|x| !grid.contains(x)) {
                    return invalid("explicit positions must lie inside the grid".into());
                }
            }
            InitMode::Quantiles if grid.dims() != 1 => {
                return invalid("init_mode = quantiles is one-dimensional".into());
            }
            _ => {}
        }
        if self.diagnostics.bins == 0 {
            return invalid("diagnostics.bins must be at least 1".into());
        }
        if self.diagnostics.loop_radius.is_some() && grid.dims() != 2 {
            return invalid("diagnostics.loop_radius needs a 2-axis grid".into());
        }
        kind.validate_specific(self)
    }
}

/// Parse and resolve a config document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let raw: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    raw.resolve()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("[scenario]\nname = \"free_gaussian_1d\"\n").unwrap();
        assert_eq!(c.grid.points, Some(vec![256]));
        assert_eq!(c.params.xi, Some(0.125));
        assert_eq!(c.params.masses, Some(vec![1.0]));
        assert_eq!(c.ensemble.n_traj, 1000);
        assert_eq!(c.diagnostics.bins, 64);
        assert!(c.t_final() > 0.0);
    }

    #[test]
    fn alpha_prime_forms() {
        let c = parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[params]\nalpha_prime = \"infinite\"\n").unwrap();
        assert_eq!(c.params.alpha_prime.0, AlphaPrime::Infinite);
        let c = parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[params]\nalpha_prime = 3.5\n").unwrap();
        assert_eq!(c.params.alpha_prime.0, AlphaPrime::Finite(3.5));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[params]\nalpha_prime = \"big\"\n"),
            Err(HarnessError::Parse(_))
        ));
    }

    #[test]
    fn strictness_and_validation() {
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\nfoo = 1\n"),
            Err(HarnessError::Parse(_))
        ));
        assert!(matches!(
            parse_config("foo = 1\n[scenario]\nname = \"free_gaussian_1d\"\n"),
            Err(HarnessError::Parse(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[params]\neta_tilde = 1.5\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"hybrid_free_1d\"\n[params]\nxi = 0.1\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[params]\nxi = 0.0\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[grid]\npoints = [64, 64]\nextents = [10.0, 10.0]\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[run]\nt_final = -1.0\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[ensemble]\nn_traj = 0\n"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = \"quantum_foam\"\n"),
            Err(HarnessError::UnsupportedScenario(_))
        ));
    }

    #[test]
    fn parse_errors_carry_line_info() {
        let err = parse_config("[scenario]\nname = \"free_gaussian_1d\"\n[grid]\npoints = [64\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn round_trip_every_scenario() {
        for kind in ScenarioKind::ALL {
            let c = parse_config(&format!("[scenario]\nname = \"{}\"\n", kind.name())).unwrap();
            let again = parse_config(&c.to_toml()).unwrap();
            assert_eq!(c, again, "{}", kind.name());
        }
    }
}
