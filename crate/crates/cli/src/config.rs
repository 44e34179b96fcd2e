//! Optional JSON config. Sections hold per-subcommand defaults; command-line
//! flags always win.

use serde::Deserialize;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct Config {
    pub segment: SegmentSection,
    pub bench: BenchSection,
    pub mask: MaskSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct MaskSection {
    pub subject: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct SegmentSection {
    pub mode: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout: Option<f64>,
    pub max_retries: Option<usize>,
    /// Environment variable holding the API token.
    pub auth_env: Option<String>,
    pub frames: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub d: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))
        }
    }
}
