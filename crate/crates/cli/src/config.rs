//! File configuration, seed resolution and the config hash stamped on
//! every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use edfa_twin_core::dataset::SplitSpec;
use edfa_twin_core::synth::CampaignConfig;
use edfa_twin_core::train::{FinetuneConfig, PretrainConfig};
use edfa_twin_core::transfer::{HeteroTlConfig, HomoTlConfig};
use edfa_twin_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "EDFA_TWIN_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub campaign: CampaignConfig,
    pub split: SplitSpec,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub homo: HomoTlConfig,
    pub hetero: HeteroTlConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {}", path.display(), e.message())))
    }
}

/// Flag, then file, then `EDFA_TWIN_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={v} is not a u64"))),
        Err(_) => Ok(0),
    }
}

/// Everything that determined a command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub args: BTreeMap<String, String>,
    pub config: RunConfig,
}

impl Resolved {
    pub fn new(command: &str, seed: u64, config: RunConfig) -> Self {
        let mut config = config;
        config.seed = Some(seed);
        Self { command: command.into(), seed, args: BTreeMap::new(), config }
    }

    pub fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.into(), value.to_string());
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Writes `<output>.config.toml` with the hash in a leading comment.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".config.toml");
        let path = output.with_file_name(name);
        std::fs::write(&path, format!("# sha256 {}\n{}", self.hash(), self.to_toml()))?;
        Ok(path)
    }
}
