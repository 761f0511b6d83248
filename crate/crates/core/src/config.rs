//! Run configuration: one JSON file, overridable from the command line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::Capabilities;
use crate::datasets::DatasetKind;
use crate::entailment::EntailmentConfig;
use crate::error::{Error, Result};
use crate::method::Method;

pub const API_KEY_ENV: &str = "VERICHAIN_API_KEY";

fn default_model() -> String {
    "mock".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub capabilities: Capabilities,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            base_url: None,
            model: default_model(),
            capabilities: Capabilities::default(),
            timeout_secs: default_timeout(),
            retry_attempts: default_attempts(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliSettings {
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for NliSettings {
    fn default() -> Self {
        Self {
            base_url: None,
            timeout_secs: default_timeout(),
        }
    }
}

fn default_temperature() -> f64 {
    0.5
}
fn default_num_samples() -> u32 {
    5
}
fn default_answer_tokens() -> u32 {
    512
}
fn default_verify_tokens() -> u32 {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSettings {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_num_samples")]
    pub num_samples: u32,
    #[serde(default = "default_answer_tokens")]
    pub answer_max_tokens: u32,
    #[serde(default = "default_verify_tokens")]
    pub verify_max_tokens: u32,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            num_samples: default_num_samples(),
            answer_max_tokens: default_answer_tokens(),
            verify_max_tokens: default_verify_tokens(),
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_workers() -> usize {
    4
}
fn default_cache_root() -> PathBuf {
    PathBuf::from(".verichain-cache")
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub nli: NliSettings,
    #[serde(default)]
    pub entailment: EntailmentConfig,
    #[serde(default)]
    pub datasets: BTreeMap<DatasetKind, PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sampling: SamplingSettings,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_cache_root")]
    pub cache_root: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub limit: Option<usize>,
    /// Scripted mock backend + NLI table; replaces both services.
    #[serde(default)]
    pub mock: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    /// Parse a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self.datasets.values_mut() {
            fix(p);
        }
        fix(&mut self.cache_root);
        fix(&mut self.out);
        if let Some(m) = self.mock.as_mut() {
            fix(m);
        }
    }

    /// Checks done before any network call.
    pub fn validate(&self, mock_logprobs: Option<bool>) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::Config(format!("method `{m}` listed twice")));
            }
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        let sampling = self.methods.iter().any(|m| m.is_sampling());
        if sampling && self.sampling.num_samples < 2 {
            return Err(Error::Config("sampling methods need num_samples >= 2".into()));
        }
        if !(self.sampling.temperature.is_finite() && self.sampling.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.sampling.answer_max_tokens == 0 || self.sampling.verify_max_tokens == 0 {
            return Err(Error::Config("max token budgets must be >= 1".into()));
        }
        let logprobs = mock_logprobs.unwrap_or(self.backend.capabilities.logprobs);
        if let Some(m) = self.methods.iter().find(|m| m.needs_logprobs()) {
            if !logprobs {
                return Err(Error::Config(format!(
                    "method `{m}` needs token logprobs but the backend does not declare them"
                )));
            }
        }
        if self.mock.is_none() {
            if self.backend.base_url.is_none() {
                return Err(Error::Config("backend.base_url is required without --mock".into()));
            }
            let needs_nli = self.methods.iter().any(|m| matches!(m, Method::Se | Method::TwoPhase));
            if needs_nli && self.nli.base_url.is_none() {
                return Err(Error::Config(
                    "nli.base_url is required for se / two_phase without --mock".into(),
                ));
            }
        }
        Ok(())
    }
}
