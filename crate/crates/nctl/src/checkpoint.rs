//! Versioned JSON checkpoints of trained networks.

use std::path::Path;

use nctl_core::state::NetworkState;
use nctl_core::NctlNetwork;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Standardizer;
use crate::error::{NctlError, Result};

pub const CHECKPOINT_FORMAT: &str = "nctl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Feature statistics the network was trained under, if any.
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
    pub network: NetworkState,
}

impl Checkpoint {
    pub fn new(net: &NctlNetwork) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            protocol: None,
            seed: None,
            standardizer: None,
            network: net.export_state(),
        }
    }

    pub fn network(&self) -> Result<NctlNetwork> {
        Ok(NctlNetwork::import_state(self.network.clone())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| NctlError::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(NctlError::Checkpoint(format!(
                "not a checkpoint (format {:?})",
                header.format
            )));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(NctlError::Checkpoint(format!(
                "incompatible version {} (this build reads version {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        serde_json::from_str(text).map_err(|e| NctlError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| NctlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NctlError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Hex SHA-256 of a network's exported state; equal digests mean equal networks.
pub fn state_digest(net: &NctlNetwork) -> String {
    let bytes = serde_json::to_vec(&net.export_state()).expect("state serializes");
    hex(&Sha256::digest(bytes))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
