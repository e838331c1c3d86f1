//! Run orchestration: field propagation, ensemble evolution, diagnostics and
//! artifact writing, one field frame at a time.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::config::{Artifact, InitMode, ScenarioConfig};
use super::error::HarnessError;
use super::output::{
    encode_grid, fmt_f64, sha256_hex, write_atomic, CsvWriter, Manifest, FORMAT_VERSION,
};
use super::scenario::{build_scenario, InitialState, Oracle, Scenario};
use crate::diagnostics::{
    circulation, distribution_distance, ks_critical_one_sample, ks_critical_two_sample, ks_two_sample, LoopPath,
    MIN_SAMPLES,
};
use crate::model::{
    velocity_fields_from_hydro, velocity_fields_with_hbar, AlphaPrime, Grid, MassTensor, TrajectoryEnsemble,
    ValidatedParameters, VelocityFields, WaveFunction,
};
use crate::propagator::{
    ensemble_hamiltonian_with, step_count, wavefunction_energy, HydroEvolution, LinearPropagator, PotentialField,
    PropagationError, PropagationReport, CAUSTIC_BLOWUP,
};
use crate::sampler::{quantile_positions, sample_from_density, EnsembleStepper, FieldFrames};

/// Significance level of every KS comparison the harness reports.
pub const KS_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Overrides `ensemble.master_seed`.
    pub seed: Option<u64>,
    /// Overrides `outputs.directory`.
    pub out: Option<PathBuf>,
    /// Skip all file output (library use).
    pub dry: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub time: f64,
    pub norm: f64,
    pub energy: f64,
    /// `None` below [`MIN_SAMPLES`] trajectories.
    pub l1: Option<f64>,
    pub ks_per_axis: Vec<f64>,
    pub circulation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// The config as run, seed override applied.
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub oracle: Oracle,
    pub frames: Vec<FrameDiagnostics>,
    pub initial_positions: Vec<f64>,
    pub final_positions: Vec<f64>,
    pub final_density: Vec<f64>,
    /// Norm/energy drift over every field step.
    pub report: PropagationReport,
    pub clamp_events: u64,
    pub aborted: Vec<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunSummary {
    pub fn final_time(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.time)
    }

    pub fn final_axis(&self, axis: usize) -> Vec<f64> {
        let d = self.grid.dims();
        self.final_positions.chunks(d).map(|x| x[axis]).collect()
    }
}

enum Field {
    Linear {
        prop: LinearPropagator,
        psi: Vec<Complex64>,
    },
    Hybrid(HydroEvolution),
}

struct FieldRun<'a> {
    field: Field,
    grid: &'a Grid,
    potential: &'a PotentialField,
    masses: &'a MassTensor,
    params: &'a ValidatedParameters,
    hbar_eff: f64,
}

impl FieldRun<'_> {
    fn step(&mut self) -> Result<(), HarnessError> {
        match &mut self.field {
            Field::Linear { prop, psi } => {
                prop.step(psi);
                if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(PropagationError::NonFinite { time: f64::NAN }.into());
                }
                Ok(())
            }
            Field::Hybrid(evo) => Ok(evo.step()?),
        }
    }

    fn density(&self) -> Vec<f64> {
        match &self.field {
            Field::Linear { psi, .. } => psi.iter().map(|z| z.norm_sqr()).collect(),
            Field::Hybrid(evo) => evo.state().rho().to_vec(),
        }
    }

    fn wavefunction(&self) -> Option<WaveFunction> {
        match &self.field {
            Field::Linear { psi, .. } => Some(WaveFunction::from_parts_unchecked(self.grid.clone(), psi.clone())),
            Field::Hybrid(_) => None,
        }
    }

    fn norm_energy(&self) -> (f64, f64) {
        match &self.field {
            Field::Linear { prop, psi } => (
                self.grid.integrate(&self.density()),
                wavefunction_energy(prop.spectral(), psi, self.potential, self.hbar_eff, self.masses),
            ),
            Field::Hybrid(evo) => {
                let s = evo.state();
                let e = ensemble_hamiltonian_with(evo.spectral(), &s, self.potential, self.params.hbar(), 0.0, self.masses);
                (s.mass(), e)
            }
        }
    }

    fn velocities(&self) -> Result<VelocityFields, HarnessError> {
        Ok(match &self.field {
            Field::Linear { prop, psi } => {
                let wf = WaveFunction::from_parts_unchecked(self.grid.clone(), psi.clone());
                velocity_fields_with_hbar(prop.spectral(), &wf, self.hbar_eff, self.params, self.masses)?
            }
            Field::Hybrid(evo) => velocity_fields_from_hydro(evo.spectral(), &evo.state(), self.params, self.masses)?,
        })
    }
}

fn initial_positions(c: &ScenarioConfig, s: &Scenario, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let rho = s.initial.density();
    let n = c.ensemble.n_traj;
    Ok(match c.ensemble.init_mode {
        InitMode::Density => sample_from_density(&s.grid, &rho, n, seed)?,
        InitMode::Quantiles => quantile_positions(&s.grid, &rho, n)?,
        InitMode::Explicit => c.ensemble.positions.clone().expect("validated"),
    })
}

fn alpha_label(a: AlphaPrime) -> String {
    match a {
        AlphaPrime::Finite(x) => format!("{x}"),
        AlphaPrime::Infinite => "infinite".into(),
    }
}

/// Field frame indices that are recorded: every `stride`-th and the last.
fn recorded(k: usize, n: usize, stride: usize) -> bool {
    k % stride == 0 || k == n
}

struct Writers {
    dir: PathBuf,
    trajectories: Option<CsvWriter>,
    diagnostics: Option<CsvWriter>,
    fields: bool,
    written: Vec<PathBuf>,
}

/// Execute one run; writes artifacts unless `opts.dry`.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.ensemble.master_seed = seed;
    }
    config.validate()?;
    let scenario = build_scenario(&config)?;
    let params = config.parameters();
    let grid = scenario.grid.clone();
    let d = grid.dims();
    let t_final = config.t_final();
    let n = step_count(t_final, params.dt_field());
    let dt = t_final / n as f64;
    let seed = config.ensemble.master_seed;

    let field = match &scenario.initial {
        InitialState::Wave(psi) => Field::Linear {
            prop: LinearPropagator::new(&scenario.potential, scenario.hbar_eff, &scenario.masses, dt)?,
            psi: psi.values().to_vec(),
        },
        InitialState::Hydro(h) => Field::Hybrid(HydroEvolution::new(
            h,
            &scenario.potential,
            0.0,
            &scenario.masses,
            dt,
            t_final,
            CAUSTIC_BLOWUP,
        )?),
    };
    let mut field = FieldRun {
        field,
        grid: &grid,
        potential: &scenario.potential,
        masses: &scenario.masses,
        params: &params,
        hbar_eff: scenario.hbar_eff,
    };

    let positions = initial_positions(&config, &scenario, seed)?;
    let init = TrajectoryEnsemble::initial(d, 0.0, positions.clone(), seed)?;
    let mut stepper = if params.alpha_prime().is_infinite() {
        EnsembleStepper::bohmian(&grid, &init, &params, &scenario.masses)?
    } else {
        EnsembleStepper::stochastic(&grid, &init, &params, &scenario.masses)?
    };
    let loop_path = match config.diagnostics.loop_radius {
        Some(r) => Some(LoopPath::circle(&grid, &[0.0, 0.0], (0, 1), r, config.diagnostics.loop_vertices)?),
        None => None,
    };

    let mut writers = if opts.dry {
        None
    } else {
        let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&config.outputs.directory));
        fs::create_dir_all(&dir)?;
        let want = |a: Artifact| config.outputs.artifacts.contains(&a);
        let mut traj_header = vec!["frame_time".to_string(), "traj_id".to_string()];
        traj_header.extend((0..d).map(|a| format!("x_{a}")));
        let mut diag_header: Vec<String> = ["frame_time", "norm", "energy", "l1"].map(String::from).to_vec();
        diag_header.extend((0..d).map(|a| format!("ks_axis_{a}")));
        if loop_path.is_some() {
            diag_header.push("circulation".into());
        }
        Some(Writers {
            trajectories: if want(Artifact::Trajectories) {
                Some(CsvWriter::create(&dir.join("trajectories.csv"), &traj_header)?)
            } else {
                None
            },
            diagnostics: if want(Artifact::Diagnostics) {
                Some(CsvWriter::create(&dir.join("diagnostics.csv"), &diag_header)?)
            } else {
                None
            },
            fields: want(Artifact::Fields),
            written: Vec::new(),
            dir,
        })
    };

    let mut frames = Vec::new();
    let mut report = PropagationReport::default();
    let (norm0, energy0) = field.norm_energy();
    let mut record = |t: f64,
                      field: &FieldRun,
                      positions: &[f64],
                      norm: f64,
                      energy: f64|
     -> Result<Vec<f64>, HarnessError> {
        let rho = field.density();
        let (l1, ks) = if positions.len() / d >= MIN_SAMPLES {
            let dd = distribution_distance(&grid, positions, &rho, config.diagnostics.bins)?;
            (Some(dd.l1), dd.ks_per_axis)
        } else {
            (None, vec![f64::NAN; d])
        };
        let circ = match (&loop_path, field.wavefunction()) {
            (Some(path), Some(psi)) => Some(circulation(&psi, path, &params, &scenario.masses)?),
            _ => None,
        };
        if let Some(w) = writers.as_mut() {
            let ordinal = frames.len();
            if let Some(tw) = w.trajectories.as_mut() {
                for (i, x) in positions.chunks(d).enumerate() {
                    let mut row = vec![fmt_f64(t), i.to_string()];
                    row.extend(x.iter().map(|&v| fmt_f64(v)));
                    tw.row(&row)?;
                }
            }
            if let Some(dw) = w.diagnostics.as_mut() {
                let mut row = vec![fmt_f64(t), fmt_f64(norm), fmt_f64(energy), fmt_f64(l1.unwrap_or(f64::NAN))];
                row.extend(ks.iter().map(|&v| fmt_f64(v)));
                if let Some(c) = circ {
                    row.push(fmt_f64(c));
                }
                dw.row(&row)?;
            }
            if w.fields {
                let path = w.dir.join(format!("fields_{ordinal:04}.grid"));
                w.written.push(write_atomic(&path, &encode_grid(&grid, &rho))?);
            }
        }
        frames.push(FrameDiagnostics {
            time: t,
            norm,
            energy,
            l1,
            ks_per_axis: ks,
            circulation: circ,
        });
        Ok(rho)
    };

    let mut last_rho = record(0.0, &field, stepper.positions(), norm0, energy0)?;
    let mut prev = field.velocities()?;
    for k in 1..=n {
        let t_prev = (k - 1) as f64 * dt;
        let t = k as f64 * dt;
        field.step()?;
        let (norm, energy) = field.norm_energy();
        report.observe(norm, norm0, energy, energy0);
        report.steps_taken += 1;
        let next = field.velocities()?;
        let window = FieldFrames::new(vec![t_prev, t], vec![prev, next])?;
        stepper.advance(&window, t)?;
        prev = window.into_fields().pop().unwrap();
        if recorded(k, n, config.run.output_stride) {
            last_rho = record(t, &field, stepper.positions(), norm, energy)?;
        }
    }

    let output_dir = match writers {
        Some(mut w) => {
            if let Some(tw) = w.trajectories.take() {
                w.written.push(tw.commit()?);
            }
            if let Some(dw) = w.diagnostics.take() {
                w.written.push(dw.commit()?);
            }
            let text = config.to_toml();
            w.written.push(write_atomic(&w.dir.join("config.toml"), text.as_bytes())?);
            w.written.sort();
            let manifest = Manifest {
                format_version: FORMAT_VERSION,
                code_version: env!("CARGO_PKG_VERSION").into(),
                scenario: config.scenario.name.clone(),
                config_sha256: sha256_hex(text.as_bytes()),
                master_seed: seed,
                alpha_prime: alpha_label(params.alpha_prime()),
                frame_times: frames.iter().map(|f| f.time).collect(),
                artifacts: w
                    .written
                    .iter()
                    .map(|p| Manifest::entry(&w.dir, p))
                    .collect::<Result<_, _>>()?,
            };
            manifest.write(&w.dir)?;
            Some(w.dir)
        }
        None => None,
    };

    Ok(RunSummary {
        config,
        grid: grid.clone(),
        oracle: scenario.oracle,
        frames,
        initial_positions: positions,
        final_positions: stepper.positions().to_vec(),
        final_density: std::mem::take(&mut last_rho),
        report,
        clamp_events: stepper.clamp_events(),
        aborted: stepper.aborted(),
        output_dir,
    })
}

/// Two-sample KS comparison of the final ensembles of two sweep runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseKs {
    pub alpha_a: AlphaPrime,
    pub alpha_b: AlphaPrime,
    pub axis: usize,
    pub statistic: f64,
    pub critical: f64,
}

impl PairwiseKs {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub runs: Vec<(AlphaPrime, RunSummary)>,
    pub pairwise: Vec<PairwiseKs>,
    pub output_dir: Option<PathBuf>,
}

/// Re-run `config` for each `α′` with `η̃` held fixed and compare the final ensembles.
pub fn sweep(config: &ScenarioConfig, alphas: &[AlphaPrime], opts: &RunOptions) -> Result<SweepSummary, HarnessError> {
    if alphas.len() < 2 {
        return Err(HarnessError::Validation("a sweep needs at least two alpha' values".into()));
    }
    let root = (!opts.dry).then(|| opts.out.clone().unwrap_or_else(|| PathBuf::from(&config.outputs.directory)));
    let mut runs = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let c = config.with_alpha_prime(a)?;
        let sub = RunOptions {
            seed: opts.seed,
            out: root.as_ref().map(|r| r.join(format!("alpha_{}", alpha_label(a)))),
            dry: opts.dry,
        };
        runs.push((a, run(&c, &sub)?));
    }
    let d = runs[0].1.grid.dims();
    let mut pairwise = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            for axis in 0..d {
                let (xa, xb) = (runs[i].1.final_axis(axis), runs[j].1.final_axis(axis));
                pairwise.push(PairwiseKs {
                    alpha_a: runs[i].0,
                    alpha_b: runs[j].0,
                    axis,
                    statistic: ks_two_sample(&xa, &xb),
                    critical: ks_critical_two_sample(KS_ALPHA, xa.len(), xb.len()),
                });
            }
        }
    }
    if let Some(dir) = &root {
        write_sweep_reports(dir, config, &runs, &pairwise)?;
    }
    Ok(SweepSummary {
        runs,
        pairwise,
        output_dir: root,
    })
}

fn write_sweep_reports(
    dir: &Path,
    config: &ScenarioConfig,
    runs: &[(AlphaPrime, RunSummary)],
    pairwise: &[PairwiseKs],
) -> Result<(), HarnessError> {
    let d = runs[0].1.grid.dims();
    let mut header: Vec<String> = ["alpha_prime", "l1"].map(String::from).to_vec();
    header.extend((0..d).map(|a| format!("ks_axis_{a}")));
    header.push("ks_critical".into());
    let mut summary = CsvWriter::create(&dir.join("sweep_summary.csv"), &header)?;
    for (a, r) in runs {
        let last = r.frames.last().unwrap();
        let n = r.final_positions.len() / d;
        let mut row = vec![alpha_label(*a), fmt_f64(last.l1.unwrap_or(f64::NAN))];
        row.extend(last.ks_per_axis.iter().map(|&k| fmt_f64(k)));
        row.push(fmt_f64(ks_critical_one_sample(KS_ALPHA, n)));
        summary.row(&row)?;
    }
    let mut report = CsvWriter::create(
        &dir.join("sweep_report.csv"),
        &["alpha_a", "alpha_b", "axis", "ks", "ks_critical", "pass"].map(String::from),
    )?;
    for p in pairwise {
        report.row(&[
            alpha_label(p.alpha_a),
            alpha_label(p.alpha_b),
            p.axis.to_string(),
            fmt_f64(p.statistic),
            fmt_f64(p.critical),
            p.passes().to_string(),
        ])?;
    }
    let mut written = vec![summary.commit()?, report.commit()?];
    for (_, r) in runs {
        if let Some(sub) = &r.output_dir {
            written.push(sub.join(super::output::MANIFEST_NAME));
        }
    }
    let text = config.to_toml();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        scenario: config.scenario.name.clone(),
        config_sha256: sha256_hex(text.as_bytes()),
        master_seed: runs[0].1.config.ensemble.master_seed,
        alpha_prime: runs.iter().map(|(a, _)| alpha_label(*a)).collect::<Vec<_>>().join(","),
        frame_times: runs[0].1.frames.iter().map(|f| f.time).collect(),
        artifacts: written
            .iter()
            .map(|p| Manifest::entry(dir, p))
            .collect::<Result<_, _>>()?,
    };
    manifest.write(dir)?;
    Ok(())
}

/// Write the scenario's analytic reference curves at the recorded frame times:
/// `oracle.csv` (centre, width, winding) and `oracle_XXXX.grid` densities.
pub fn dump_oracle(config: &ScenarioConfig, out: Option<&Path>) -> Result<PathBuf, HarnessError> {
    let scenario = build_scenario(config)?;
    let oracle = scenario.oracle;
    if !oracle.is_some() {
        return Err(HarnessError::UnsupportedScenario(format!(
            "{} has no analytic oracle for this configuration",
            config.scenario.name
        )));
    }
    let dir = out.map_or_else(|| PathBuf::from(&config.outputs.directory), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    let grid = &scenario.grid;
    let d = grid.dims();
    let t_final = config.t_final();
    let params = config.parameters();
    let n = step_count(t_final, params.dt_field());
    let dt = t_final / n as f64;
    let mut header = vec!["frame_time".to_string()];
    header.extend((0..d).map(|a| format!("center_{a}")));
    header.extend((0..d).map(|a| format!("width_{a}")));
    header.push("winding".into());
    let mut csv = CsvWriter::create(&dir.join("oracle.csv"), &header)?;
    let mut written = Vec::new();
    let mut times = Vec::new();
    for k in (0..=n).filter(|&k| recorded(k, n, config.run.output_stride)) {
        let t = k as f64 * dt;
        let mut row = vec![fmt_f64(t)];
        row.extend(oracle.center(t).unwrap().iter().map(|&v| fmt_f64(v)));
        row.extend(oracle.width(t).unwrap().iter().map(|&v| fmt_f64(v)));
        row.push(oracle.winding().map_or_else(String::new, |w| w.to_string()));
        csv.row(&row)?;
        let rho = grid.map_nodes(|x| oracle.density(x, t).unwrap());
        let path = dir.join(format!("oracle_{:04}.grid", times.len()));
        written.push(write_atomic(&path, &encode_grid(grid, &rho))?);
        times.push(t);
    }
    written.push(csv.commit()?);
    written.sort();
    let text = config.to_toml();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        scenario: config.scenario.name.clone(),
        config_sha256: sha256_hex(text.as_bytes()),
        master_seed: config.ensemble.master_seed,
        alpha_prime: alpha_label(params.alpha_prime()),
        frame_times: times,
        artifacts: written
            .iter()
            .map(|p| Manifest::entry(&dir, p))
            .collect::<Result<_, _>>()?,
    };
    manifest.write(&dir)?;
    Ok(dir)
}

/// Run `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    let pool = b.build().map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
