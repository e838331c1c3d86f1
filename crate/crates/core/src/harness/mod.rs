//! Scenario configs, built-in scenarios with analytic oracles, run
//! orchestration and on-disk artifacts. The `edlab` binary is a thin CLI
//! over this module.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod scenario;

pub use config::{load_config, parse_config, ScenarioConfig};
pub use error::HarnessError;
pub use output::{decode_grid, encode_grid, read_grid_file, verify_manifest, Manifest, MANIFEST_NAME};
pub use run::{dump_oracle, run, sweep, with_workers, RunOptions, RunSummary, SweepSummary};
pub use scenario::{build_scenario, InitialState, Oracle, Scenario, ScenarioKind};
