//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use edlab::diagnostics::{fit_power_law, ks_critical_one_sample};
use edlab::harness::{
    build_scenario, parse_config, run, sweep, with_workers, InitialState, RunOptions, RunSummary, ScenarioConfig,
};
use edlab::model::{
    to_hydro_with_hbar, validate_parameters, AlphaPrime, MassTensor, ModelParameters, WaveFunction,
};
use edlab::propagator::{check_xi_equivalence, propagate_linear};
use edlab::sampler::{kernel_from_multipliers, sample_step, transition_kernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KS_ALPHA: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(text: &str) -> ScenarioConfig {
    parse_config(text).unwrap_or_else(|e| panic!("bad test config: {e}\n{text}"))
}

fn dry(c: &ScenarioConfig) -> RunSummary {
    run(c, &RunOptions { dry: true, ..Default::default() }).expect("run")
}

fn params(hbar: f64, eta_tilde: f64, alpha: AlphaPrime, dt: f64) -> edlab::model::ValidatedParameters {
    validate_parameters(&ModelParameters {
        hbar,
        eta_tilde,
        alpha_prime: alpha,
        xi: hbar * hbar / 8.0,
        quantization_n: None,
        dt_field: dt,
        dt_particle: dt,
    })
    .unwrap()
}

/// Random draws of (∂φ, ħ, N, α′, m, Δt); 10⁵ one-step samples each; sample
/// mean and variance within 3σ of the closed form on every axis.
fn kernel_moments() -> Outcome {
    const SAMPLES: usize = 100_000;
    let mut meta = ChaCha8Rng::seed_from_u64(0x6b65726e);
    let mut worst: f64 = 0.0;
    let mut form_gap: f64 = 0.0;
    for _ in 0..20 {
        let d = meta.random_range(1..=3);
        let hbar = meta.random_range(0.5..2.0);
        let eta_tilde = hbar * meta.random_range(1..=3) as f64;
        let alpha = 10f64.powf(meta.random_range(-1.0..2.0));
        let dt = 10f64.powf(meta.random_range(-4.0..-1.0));
        let grad: Vec<f64> = (0..d).map(|_| meta.random_range(-2.0..2.0)).collect();
        let m = MassTensor::new((0..d).map(|_| meta.random_range(0.5..3.0)).collect()).unwrap();
        let p = params(hbar, eta_tilde, AlphaPrime::Finite(alpha), dt);
        let k = transition_kernel(&vec![0.0; d], &grad, &p, &m, dt);
        let raw = kernel_from_multipliers(&grad, eta_tilde / alpha, alpha, &m, dt);
        for a in 0..d {
            form_gap = form_gap
                .max(((k.mean_step[a] - raw.mean_step[a]) / k.mean_step[a].abs().max(1e-300)).abs())
                .max(((k.covariance_diag[a] - raw.covariance_diag[a]) / k.covariance_diag[a]).abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(meta.random());
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..SAMPLES {
            for (a, x) in sample_step(&k, &mut rng).into_iter().enumerate() {
                sum[a] += x;
                sq[a] += x * x;
            }
        }
        let n = SAMPLES as f64;
        for a in 0..d {
            let mean = sum[a] / n;
            let var = (sq[a] - n * mean * mean) / (n - 1.0);
            let s2 = k.covariance_diag[a];
            let z_mean = (mean - k.mean_step[a]) / (s2 / n).sqrt();
            let z_var = (var - s2) / (s2 * (2.0 / (n - 1.0)).sqrt());
            worst = worst.max(z_mean.abs()).max(z_var.abs());
        }
    }
    outcome(
        worst < 3.0 && form_gap < 1e-12,
        format!("max |z| = {worst:.3} (< 3), raw vs rescaled kernel gap {form_gap:.1e}"),
    )
}

/// (φ, α′) and (Cφ, α′/C) at fixed η give the same kernel.
fn epistemic_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x65706973);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let eta = rng.random_range(0.01..2.0);
        let alpha = 10f64.powf(rng.random_range(-2.0..3.0));
        let dt = rng.random_range(1e-4..1e-1);
        let grad: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = MassTensor::new((0..d).map(|_| rng.random_range(0.1..5.0)).collect()).unwrap();
        let scaled: Vec<f64> = grad.iter().map(|g| c * g).collect();
        let a = kernel_from_multipliers(&grad, eta, alpha, &m, dt);
        let b = kernel_from_multipliers(&scaled, eta, alpha / c, &m, dt);
        for i in 0..d {
            let scale = a.mean_step[i].abs().max(a.covariance_diag[i]);
            worst = worst
                .max((a.mean_step[i] - b.mean_step[i]).abs() / scale)
                .max((a.covariance_diag[i] - b.covariance_diag[i]).abs() / a.covariance_diag[i]);
        }
    }
    outcome(worst < 1e-12, format!("max relative moment gap {worst:.1e} (< 1e-12)"))
}

/// free_gaussian_1d at α′ ∈ {1, 10, 100} with η̃ = ħ, 10⁴ trajectories, t = 1.
fn alpha_symmetry() -> Outcome {
    let c = config(
        "[scenario]\nname = \"free_gaussian_1d\"\n[ensemble]\nn_traj = 10000\nmaster_seed = 7\n\
         [run]\nt_final = 1.0\n[diagnostics]\nbins = 64\n",
    );
    let alphas = [1.0, 10.0, 100.0].map(AlphaPrime::Finite);
    let s = sweep(&c, &alphas, &RunOptions { dry: true, ..Default::default() }).expect("sweep");
    let crit = ks_critical_one_sample(KS_ALPHA, 10_000);
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, r) in &s.runs {
        let last = r.frames.last().unwrap();
        let l1 = last.l1.unwrap();
        let ks = last.ks_per_axis[0];
        pass &= (r.final_time() - 1.0).abs() < 1e-12 && l1 < 0.05 && ks < crit;
        parts.push(format!("a'={a}: L1 {l1:.4} KS {ks:.4}"));
    }
    let worst_pair = s.pairwise.iter().map(|p| p.statistic / p.critical).fold(0.0, f64::max);
    pass &= s.pairwise.iter().all(|p| p.passes());
    outcome(
        pass,
        format!(
            "{}; KS crit {crit:.4}; worst pairwise KS/crit {worst_pair:.3}",
            parts.join(", ")
        ),
    )
}

/// Spread of endpoints started from one point, around the deterministic
/// endpoint, against α′; then α′ = ∞ free-packet trajectories against the
/// scaling solution `x₀ s(t)/s₀`.
fn bohmian_limit() -> Outcome {
    const N: usize = 4000;
    const X0: f64 = 1.0;
    let base = |alpha: &str, n: usize, init: &str| {
        config(&format!(
            "[scenario]\nname = \"free_gaussian_1d\"\n[params]\nalpha_prime = {alpha}\n\
             [ensemble]\nn_traj = {n}\nmaster_seed = 11\n{init}\n[run]\nt_final = 1.0\n"
        ))
    };
    let point = |n: usize| format!("init_mode = \"explicit\"\npositions = {:?}", vec![X0; n]);
    let det = dry(&base("\"infinite\"", 1, &point(1))).final_positions[0];
    let mut pts = Vec::new();
    for alpha in [10.0, 1e2, 1e3, 1e4] {
        let r = dry(&base(&format!("{alpha:?}"), N, &point(N)));
        let msd = r.final_positions.iter().map(|x| (x - det).powi(2)).sum::<f64>() / N as f64;
        pts.push((alpha, msd.sqrt()));
    }
    let fit = fit_power_law(&pts).expect("fit");
    let slope_ok = (fit.slope + 0.5).abs() <= 0.1 && fit.r_squared > 0.95;

    let r = dry(&base("\"infinite\"", 201, "init_mode = \"quantiles\""));
    let t = r.final_time();
    let s_t = r.oracle.width(t).unwrap()[0];
    let mut traj_err: f64 = 0.0;
    for (x0, x) in r.initial_positions.iter().zip(&r.final_positions) {
        let exact = r.oracle.trajectory(&[*x0], t).unwrap()[0];
        traj_err = traj_err.max((x - exact).abs() / exact.abs().max(s_t));
    }
    outcome(
        slope_ok && traj_err < 1e-3,
        format!(
            "slope {:.4} (-0.5 ± 0.1), r² {:.5} (> 0.95), stdevs [{}]; trajectory rel err {traj_err:.2e} (< 1e-3)",
            fit.slope,
            fit.r_squared,
            pts.iter().map(|(_, s)| format!("{s:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn moment(psi: &WaveFunction, power: i32, about: f64) -> f64 {
    let g = psi.grid();
    let rho = psi.density();
    let f = g.map_nodes(|x| (x[0] - about).powi(power));
    g.integrate(&f.iter().zip(&rho).map(|(a, b)| a * b).collect::<Vec<_>>())
}

/// 256-point grids, 10³ steps of Δt = 10⁻³ to t = 1.
fn schrodinger_propagation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["free_gaussian_1d", "harmonic_coherent_1d"] {
        let c = config(&format!(
            "[scenario]\nname = \"{name}\"\n[grid]\npoints = [256]\n[params]\ndt_field = 1e-3\ndt_particle = 1e-3\n\
             [run]\nt_final = 1.0\n"
        ));
        let s = build_scenario(&c).unwrap();
        let InitialState::Wave(psi0) = &s.initial else { unreachable!() };
        let (psi, report) = propagate_linear(psi0, &s.potential, &c.parameters(), &s.masses, 1.0).unwrap();
        let centre = moment(&psi, 1, 0.0);
        let width = moment(&psi, 2, centre).sqrt();
        let (err, what) = if name == "free_gaussian_1d" {
            let w = s.oracle.width(1.0).unwrap()[0];
            ((width - w).abs() / w, "width")
        } else {
            let x0 = c.state.center.as_ref().unwrap()[0];
            let exact = s.oracle.center(1.0).unwrap()[0];
            ((centre - exact).abs() / x0.abs(), "centre")
        };
        pass &= report.steps_taken == 1000 && err < 1e-4 && report.norm_drift < 1e-10 && report.energy_drift < 1e-6;
        parts.push(format!(
            "{name}: {what} rel err {err:.1e}, norm drift {:.1e}, energy drift {:.1e}",
            report.norm_drift, report.energy_drift
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Circulation on a radius-2 loop for ℓ ∈ {1, 2} and the ground state, on a
/// 256² grid over the whole run; quantization gate.
fn circulation_quantization() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for l in [0u32, 1, 2] {
        let c = config(&format!(
            "[scenario]\nname = \"vortex_2d\"\n[grid]\npoints = [256, 256]\n[state]\nwinding = {l}\n\
             [diagnostics]\nloop_vertices = 1024\n[ensemble]\nn_traj = 100\n[run]\nt_final = 0.5\n"
        ));
        let r = dry(&c);
        let target = 2.0 * std::f64::consts::PI * l as f64;
        let err = r
            .frames
            .iter()
            .map(|f| (f.circulation.expect("vortex frames carry circulation") - target).abs())
            .fold(0.0, f64::max);
        let tol = if l == 0 { 1e-6 } else { 1e-3 };
        pass &= err < tol;
        parts.push(format!("l={l}: max |circ - 2πl| {err:.2e} (< {tol:.0e})"));
    }
    let gate = |ratio: f64| {
        validate_parameters(&ModelParameters {
            eta_tilde: ratio,
            ..ModelParameters::standard(AlphaPrime::Finite(1.0), 1e-2)
        })
    };
    let rejects = gate(1.5).is_err();
    let accepts = [1.0, 2.0, 3.0].iter().all(|&n| gate(n).is_ok_and(|p| p.quantization_n() == n as u32));
    pass &= rejects && accepts;
    parts.push(format!("rejects 1.5: {rejects}, accepts N=1,2,3: {accepts}"));
    outcome(pass, parts.join("; "))
}

/// Rigid advection for the free hybrid; Newtonian trajectories in the
/// deterministic limit of the harmonic hybrid.
fn hybrid_theory() -> Outcome {
    let r = dry(&config("[scenario]\nname = \"hybrid_free_1d\"\n[ensemble]\nn_traj = 100\n"));
    let t = r.final_time();
    let exact = r.grid.map_nodes(|x| r.oracle.density(x, t).unwrap());
    let diff: Vec<f64> = r.final_density.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
    let l1 = r.grid.integrate(&diff);

    let r = dry(&config(
        "[scenario]\nname = \"hybrid_harmonic_1d\"\n[params]\nalpha_prime = \"infinite\"\n\
         [ensemble]\nn_traj = 201\ninit_mode = \"quantiles\"\n",
    ));
    let th = r.final_time();
    let s_t = r.oracle.width(th).unwrap()[0];
    let mut traj_err: f64 = 0.0;
    for (x0, x) in r.initial_positions.iter().zip(&r.final_positions) {
        let newton = r.oracle.trajectory(&[*x0], th).unwrap()[0];
        traj_err = traj_err.max((x - newton).abs() / newton.abs().max(s_t));
    }
    outcome(
        l1 < 0.01 && traj_err < 1e-3,
        format!("free: L1 vs translated ρ₀ at t={t} {l1:.2e} (< 0.01); harmonic: Newtonian rel err at t={th} {traj_err:.2e} (< 1e-3)"),
    )
}

/// Linear solver against direct Hamilton integration at ξ = ħ²/8.
fn xi_equivalence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for text in [
        "[scenario]\nname = \"free_gaussian_1d\"\n",
        "[scenario]\nname = \"free_gaussian_1d\"\n[state]\nmomentum = [1.0]\n",
        "[scenario]\nname = \"harmonic_coherent_1d\"\n",
    ] {
        let c = config(text);
        let s = build_scenario(&c).unwrap();
        let InitialState::Wave(psi) = &s.initial else { unreachable!() };
        let xi = c.params.xi.unwrap();
        let h0 = to_hydro_with_hbar(psi, s.hbar_eff).unwrapped(s.hbar_eff);
        match check_xi_equivalence(&h0, &s.potential, xi, &s.masses, 1e-3, 0.5) {
            Ok(e) => {
                pass &= s.grid.len() == 256
                    && xi == 0.125
                    && e.caustic_time.is_none()
                    && e.discrepancy < 1e-4;
                parts.push(format!("{}: max |Δρ| {:.2e} (< 1e-4)", c.scenario.name, e.discrepancy));
            }
            Err(err) => {
                pass = false;
                parts.push(format!("{}: {err}", c.scenario.name));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

/// Same config and seed on 1 and 8 workers: byte-identical trajectory CSVs.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for text in [
        "[scenario]\nname = \"free_gaussian_1d\"\n[params]\nalpha_prime = 10.0\n[ensemble]\nn_traj = 2000\n",
        "[scenario]\nname = \"vortex_2d\"\n[ensemble]\nn_traj = 2000\n[run]\nt_final = 0.2\n",
    ] {
        let c = config(text);
        let mut bytes = Vec::new();
        for workers in [1, 8] {
            let out = dir.path().join(format!("{}_{workers}", c.scenario.name));
            let opts = RunOptions { seed: Some(42), out: Some(out.clone()), dry: false };
            with_workers(Some(workers), || run(&c, &opts)).unwrap().unwrap();
            bytes.push(fs::read(out.join("trajectories.csv")).unwrap());
        }
        let same = bytes[0] == bytes[1];
        pass &= same && !bytes[0].is_empty();
        parts.push(format!("{}: {} bytes, identical {same}", c.scenario.name, bytes[0].len()));
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("kernel_moments", kernel_moments),
        ("epistemic_symmetry", epistemic_symmetry),
        ("alpha_prime_symmetry", alpha_symmetry),
        ("bohmian_limit", bohmian_limit),
        ("schrodinger_propagation", schrodinger_propagation),
        ("circulation_quantization", circulation_quantization),
        ("hybrid_theory", hybrid_theory),
        ("xi_equivalence", xi_equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{verdict} {name} [{:.1}s]: {}", start.elapsed().as_secs_f64(), o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
