//! JSON config file for the namenode binary.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use crate::state::{NamenodeConfig, PlacementPolicy};

/// On-disk config; every key is optional and falls back to the default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamenodeFileConfig {
    pub block_size_bytes: Option<u32>,
    pub heartbeat_timeout_ms: Option<u64>,
    pub placement_policy: Option<String>,
}

impl NamenodeFileConfig {
    pub fn load(path: &Path) -> Result<NamenodeFileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    pub fn into_config(self) -> Result<NamenodeConfig, String> {
        let mut cfg = NamenodeConfig::default();
        if let Some(bs) = self.block_size_bytes {
            if bs == 0 {
                return Err("block_size_bytes must be positive".into());
            }
            cfg.block_size = bs;
        }
        if let Some(ms) = self.heartbeat_timeout_ms {
            cfg.heartbeat_timeout = Duration::from_millis(ms);
        }
        match self.placement_policy.as_deref() {
            None | Some("round_robin") => cfg.placement = PlacementPolicy::RoundRobin,
            Some(other) => return Err(format!("unknown placement_policy {other:?}")),
        }
        Ok(cfg)
    }
}
