use std::path::{Path, PathBuf};

use crate::config::load_config;
use crate::CliError;

/// Environment variable overriding the bundled presets directory.
pub const PRESETS_ENV: &str = "KBREASON_PRESETS";

pub const PRESET_EXTENSION: &str = "cfg";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preset {
    pub name: String,
    pub path: PathBuf,
    pub description: String,
}

/// `explicit`, else `$KBREASON_PRESETS`, else the presets shipped with the crate.
pub fn presets_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(PRESETS_ENV) {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/presets")),
    }
}

/// Every `*.cfg` in `dir`, sorted by name.
pub fn list_presets(dir: &Path) -> Result<Vec<Preset>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingAssets(dir.to_path_buf()));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Io(e.to_string()))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(PRESET_EXTENSION) {
            continue;
        }
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let description = match load_config(&path)? {
            Ok(c) => c.experiment.description,
            Err(_) => "(invalid config)".into(),
        };
        out.push(Preset {
            name,
            path,
            description,
        });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// A path to an existing file, or the name of a bundled preset.
pub fn resolve_config(arg: &str, dir: &Path) -> Result<PathBuf, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let preset = dir.join(format!("{arg}.{PRESET_EXTENSION}"));
    if preset.is_file() {
        return Ok(preset);
    }
    if !dir.is_dir() && !arg.contains(std::path::MAIN_SEPARATOR) && !arg.ends_with(PRESET_EXTENSION) {
        return Err(CliError::MissingAssets(dir.to_path_buf()));
    }
    Err(CliError::UnknownConfig(arg.to_string()))
}
