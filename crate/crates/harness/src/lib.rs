//! Reproducible experiment runs for the Kawahara laboratory: TOML configuration,
//! scenario dispatch into `kawahara-core`, CSV/JSON/KWSP artifacts and a checksummed
//! manifest.

pub mod config;
mod error;
pub mod probe;
pub mod rough;
pub mod run;

pub use config::{ExperimentConfig, ScenarioKind};
pub use error::HarnessError;
pub use probe::{wellposed_probe, ProbeReport};
pub use run::{run_scenario, RunManifest};
