use std::path::{Path, PathBuf};

use egomedia_core::learner::LearnerConfig;
use egomedia_core::logic::GeometryConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8080;

/// Settings readable from a TOML file. Command-line flags and the
/// `EGOMEDIA_DATA_DIR` variable take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub port: u16,
    /// Where relative media uris resolve; defaults to `<data_dir>/media`.
    pub media_root: Option<PathBuf>,
    pub learner: LearnerConfig,
    pub geometry: GeometryConfig,
    pub query_log_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            port: DEFAULT_PORT,
            media_root: None,
            learner: LearnerConfig::default(),
            geometry: GeometryConfig::default(),
            query_log_capacity: 10_000,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: ServiceConfig = toml::from_str("port = 9000\n[learner]\neta = 0.5\n").unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.learner.eta, 0.5);
        assert_eq!(c.learner.epochs, 10);
        assert_eq!(c.query_log_capacity, 10_000);
    }
}
