//! JSON checkpoints holding the resolved config, the architecture and the
//! flat parameter vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::AgentConfig;
use crate::network::{ArchitectureSpec, Network, NetworkError, ParamVector};

pub const FORMAT: &str = "silu-td-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write checkpoint {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path} is not a checkpoint of this format (found `{format}` version {version})")]
    Format {
        path: String,
        format: String,
        version: u32,
    },
    #[error("checkpoint architecture does not match its config: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: AgentConfig,
    pub architecture: ArchitectureSpec,
    pub episodes_trained: u64,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(config: &AgentConfig, net: &Network, episodes_trained: u64) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config: config.clone(),
            architecture: net.spec().clone(),
            episodes_trained,
            params: net.flatten_params(),
        }
    }

    pub fn network(&self) -> Result<Network, CheckpointError> {
        Ok(Network::from_params(
            self.architecture.clone(),
            self.params.clone(),
        )?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(|source| CheckpointError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads and checks that the stored architecture is the one the stored
    /// config builds.
    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let p = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Read {
            path: p.clone(),
            source,
        })?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
                path: p.clone(),
                source,
            })?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(CheckpointError::Format {
                path: p,
                format: ck.format,
                version: ck.version,
            });
        }
        let expected = ck.config.architecture_spec();
        if expected != ck.architecture {
            return Err(CheckpointError::ArchitectureMismatch(format!(
                "config builds {} parameters in {} layers, checkpoint holds {} layers",
                expected.param_count().unwrap_or(0),
                expected.layers.len(),
                ck.architecture.layers.len()
            )));
        }
        ck.network()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Variant;
    use rand::SeedableRng;

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let config = AgentConfig::default();
        let net = Network::init(
            config.architecture_spec(),
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let ck = Checkpoint::new(&config, &net, 42);
        let path = dir.path().join("c.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.network().unwrap(), net);
    }

    #[test]
    fn rejects_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let config = AgentConfig::default();
        let net = Network::zeros(config.architecture_spec()).unwrap();
        let mut ck = Checkpoint::new(&config, &net, 0);
        ck.config.variant = Variant::Tetris10;
        ck.save(&path).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::ArchitectureMismatch(_))
        ));

        let mut ck = Checkpoint::new(&config, &net, 0);
        ck.params.0.pop();
        ck.save(&path).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::Network(_))
        ));

        fs::write(&path, "{}").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::Parse { .. })
        ));
        assert!(matches!(
            Checkpoint::load(&dir.path().join("none.json")),
            Err(CheckpointError::Read { .. })
        ));
    }
}
