//! Optional TOML config file. Keys mirror the long flag names with
//! underscores; a flag given on the command line always wins.
//!
//! ```toml
//! seed = 7
//! n = 200
//! preset = "paperlike"
//! compare = "balanced,preference,random,fixed-language"
//! flow = "headless-custom"
//! error_rate = 0.3
//! out = "runs/paperlike"
//! pilot_sessions = 40
//! group_by = "strategy"
//!
//! [world]
//! roadblocks_min = 8
//! roadblocks_max = 14
//!
//! [hyperparams]
//! epochs = 40
//! learning_rate = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use navxai::predictor::Hyperparams;
use navxai::world::WorldConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub preset: Option<String>,
    pub compare: Option<String>,
    pub flow: Option<String>,
    pub tasks: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub error_rate: Option<f64>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub bind: Option<String>,
    pub data_dir: Option<PathBuf>,
    /// Random-strategy sessions used to fit the pilot predictor.
    pub pilot_sessions: Option<usize>,
    pub group_by: Option<String>,
    pub world: Option<WorldConfig>,
    pub hyperparams: Option<Hyperparams>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))
    }
}
