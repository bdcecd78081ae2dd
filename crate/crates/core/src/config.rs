//! Miner configuration and the shipped per-benchmark presets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{to_hex, TokenizerMode};
use crate::error::{LarError, Result};

/// Environment variable naming a directory of `<name>.toml` preset files.
pub const PRESET_DIR_ENV: &str = "LAR_PRESET_DIR";

/// Overlap threshold used for every shipped preset.
pub const DEFAULT_RHO: f64 = 0.7;

/// Thresholds driving latent action identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub n_lo: usize,
    pub n_hi: usize,
    pub f_min: u64,
    pub h_max: f64,
    pub k: usize,
    pub rho: f64,
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(LarError::InvalidConfig(msg));
        if self.n_lo < 1 || self.n_lo > self.n_hi {
            return fail(format!("n-gram range [{}, {}] must satisfy 1 <= lo <= hi", self.n_lo, self.n_hi));
        }
        if self.f_min < 1 {
            return fail("f_min must be at least 1".into());
        }
        if !self.h_max.is_finite() || self.h_max < 0.0 {
            return fail(format!("H_max must be finite and >= 0, got {}", self.h_max));
        }
        if self.k < 1 {
            return fail("K must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        Ok(())
    }
}

/// A miner configuration plus the tokenizer it expects. This is the shape of
/// preset files:
///
/// ```toml
/// name = "kodcode"
/// n = [2, 6]
/// f_min = 10
/// H_max = 10.0
/// K = 100
/// rho = 0.7
/// tokenizer = "words"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PresetFile", into = "PresetFile")]
pub struct PipelineConfig {
    pub name: Option<String>,
    pub miner: MinerConfig,
    pub tokenizer: TokenizerMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: [usize; 2],
    f_min: u64,
    #[serde(rename = "H_max")]
    h_max: f64,
    #[serde(rename = "K")]
    k: usize,
    #[serde(default = "default_rho")]
    rho: f64,
    #[serde(default)]
    tokenizer: TokenizerMode,
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

impl TryFrom<PresetFile> for PipelineConfig {
    type Error = LarError;

    fn try_from(p: PresetFile) -> Result<Self> {
        let miner = MinerConfig {
            n_lo: p.n[0],
            n_hi: p.n[1],
            f_min: p.f_min,
            h_max: p.h_max,
            k: p.k,
            rho: p.rho,
        };
        miner.validate()?;
        Ok(PipelineConfig {
            name: p.name,
            miner,
            tokenizer: p.tokenizer,
        })
    }
}

impl From<PipelineConfig> for PresetFile {
    fn from(c: PipelineConfig) -> Self {
        PresetFile {
            name: c.name,
            n: [c.miner.n_lo, c.miner.n_hi],
            f_min: c.miner.f_min,
            h_max: c.miner.h_max,
            k: c.miner.k,
            rho: c.miner.rho,
            tokenizer: c.tokenizer,
        }
    }
}

const BUILTIN_PRESETS: &[(&str, &str)] = &[
    ("triviaqa", include_str!("../presets/triviaqa.toml")),
    ("kodcode", include_str!("../presets/kodcode.toml")),
    ("mind2web", include_str!("../presets/mind2web.toml")),
];

impl PipelineConfig {
    pub fn new(miner: MinerConfig, tokenizer: TokenizerMode) -> Self {
        PipelineConfig {
            name: None,
            miner,
            tokenizer,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LarError::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LarError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Names of the presets compiled into the binary.
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_PRESETS.iter().map(|(n, _)| *n)
    }

    /// Resolves a preset by name, looking in `$LAR_PRESET_DIR` first and
    /// falling back to the built-in copies.
    pub fn preset(name: &str) -> Result<Self> {
        if let Some(dir) = std::env::var_os(PRESET_DIR_ENV) {
            let path = PathBuf::from(dir).join(format!("{name}.toml"));
            if path.exists() {
                return Self::load(path);
            }
        }
        BUILTIN_PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| LarError::InvalidConfig(format!("unknown preset {name:?}")))
            .and_then(|(_, text)| Self::from_toml(text))
    }

    /// Stable hash of the thresholds and tokenizer; the preset name is not part of it.
    pub fn fingerprint(&self) -> String {
        let m = &self.miner;
        let canonical = format!(
            "n={},{};f_min={};H_max={:?};K={};rho={:?};tokenizer={}",
            m.n_lo, m.n_hi, m.f_min, m.h_max, m.k, m.rho, self.tokenizer
        );
        to_hex(&Sha256::digest(canonical.as_bytes()))
    }
}
