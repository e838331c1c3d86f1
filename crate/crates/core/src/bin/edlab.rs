use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edlab::harness::{self, HarnessError, RunOptions};
use edlab::model::AlphaPrime;

#[derive(Parser)]
#[command(name = "edlab", version, about = "Entropic-dynamics scenario runner")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Propagate fields and trajectories and write all artifacts.
    Run { config: PathBuf },
    /// Parse and validate a config, then print it with defaults filled in.
    Validate { config: PathBuf },
    /// Dump the scenario's analytic reference curves.
    Oracle { config: PathBuf },
    /// Repeat a run for several alpha' values at fixed eta-tilde.
    Sweep {
        config: PathBuf,
        /// Comma-separated list, e.g. `1,10,100,infinite`.
        #[arg(long = "alpha-prime", value_delimiter = ',', required = true)]
        alpha_prime: Vec<String>,
    },
}

fn parse_alpha(s: &str) -> Result<AlphaPrime, HarnessError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("infinite") || s.eq_ignore_ascii_case("inf") {
        return Ok(AlphaPrime::Infinite);
    }
    s.parse::<f64>()
        .map(AlphaPrime::Finite)
        .map_err(|_| HarnessError::Validation(format!("bad alpha' value {s:?}")))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out.clone(),
        dry: false,
    };
    match cli.verb {
        Verb::Validate { config } => {
            let c = harness::load_config(&config)?;
            print!("{}", c.to_toml());
        }
        Verb::Run { config } => {
            let c = harness::load_config(&config)?;
            let s = harness::with_workers(cli.workers, || harness::run(&c, &opts))??;
            let last = s.frames.last().unwrap();
            println!(
                "{}: t = {}, norm drift {:.3e}, energy drift {:.3e}, l1 {}, clamps {}, aborted {}",
                c.scenario.name,
                last.time,
                s.report.norm_drift,
                s.report.energy_drift,
                last.l1.map_or("-".into(), |v| format!("{v:.4}")),
                s.clamp_events,
                s.aborted.len()
            );
            if let Some(dir) = s.output_dir {
                println!("wrote {}", dir.display());
            }
        }
        Verb::Oracle { config } => {
            let c = harness::load_config(&config)?;
            let dir = harness::dump_oracle(&c, cli.out.as_deref())?;
            println!("wrote {}", dir.display());
        }
        Verb::Sweep { config, alpha_prime } => {
            let c = harness::load_config(&config)?;
            let alphas = alpha_prime.iter().map(|s| parse_alpha(s)).collect::<Result<Vec<_>, _>>()?;
            let s = harness::with_workers(cli.workers, || harness::sweep(&c, &alphas, &opts))??;
            for p in &s.pairwise {
                println!(
                    "alpha' {} vs {} axis {}: KS {:.4} (1% critical {:.4}) {}",
                    p.alpha_a,
                    p.alpha_b,
                    p.axis,
                    p.statistic,
                    p.critical,
                    if p.passes() { "ok" } else { "DIFFERENT" }
                );
            }
            if let Some(dir) = s.output_dir {
                println!("wrote {}", dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
