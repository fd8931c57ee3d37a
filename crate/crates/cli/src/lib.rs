//! Config-driven experiment runner for the `kbreason` core library.

pub mod config;
pub mod experiments;
pub mod presets;

use std::path::PathBuf;

pub use config::{load_config, parse_config, validate, Diagnostic, ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, write_artifacts, ExperimentOutput, ExperimentResult};
pub use presets::{list_presets, presets_dir, resolve_config, Preset};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", render(.0))]
    Validation(Vec<Diagnostic>),
    #[error("{0}")]
    Io(String),
    #[error("missing assets: presets directory {} does not exist", .0.display())]
    MissingAssets(PathBuf),
    #[error("{0:?} is neither a config file nor a bundled preset")]
    UnknownConfig(String),
    #[error("output directory {} already exists; refusing to overwrite it", .0.display())]
    OutputExists(PathBuf),
    #[error(transparent)]
    Core(#[from] kbreason::Error),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// 1 for invalid configs, 2 for everything that went wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }
}
