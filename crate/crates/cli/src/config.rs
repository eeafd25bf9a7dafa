//! TOML experiment configs. Every field is optional; command-line flags
//! override file values, which override built-in defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {source}: {e}")))?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        CliError::parse(&source, line, e.message().to_string())
    })
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryFile {
    pub family: Option<String>,
    pub order: Option<usize>,
    pub kmin: Option<usize>,
    pub kmax: Option<usize>,
    pub threshold: Option<f64>,
    pub mc: Option<usize>,
    pub seed: Option<u64>,
    pub kernel: Option<String>,
    /// Number of coordinates for the `orthogonal-sums` family.
    pub coords: Option<usize>,
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmFile {
    pub hurst: Option<f64>,
    pub kappa: Option<u32>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
}

/// Resolved battery parameters; hashed into output headers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryConfig {
    pub family: String,
    pub order: usize,
    pub kmin: usize,
    pub kmax: usize,
    pub threshold: f64,
    pub mc: Option<usize>,
    pub seed: u64,
    pub kernel: Option<String>,
    pub coords: usize,
    pub t_grid: Vec<f64>,
}
