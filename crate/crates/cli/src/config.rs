//! Run configuration and provider selection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bias_audit::detection::DEFAULT_FAILURE_THRESHOLD;
use bias_audit::llm_gateway::{cache_dir_or, ProviderConfig, ProviderKind, CACHE_DIR_ENV};
use bias_audit::Gateway;
use serde::{Deserialize, Serialize};

/// Contents of the `--config` file (TOML or JSON, by extension).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub detection: Option<ProviderConfig>,
    pub debias: Option<ProviderConfig>,
    pub embedding: Option<ProviderConfig>,
    pub detector_model: Option<String>,
    #[serde(default = "default_threshold")]
    pub failure_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_FAILURE_THRESHOLD
}

impl RunConfig {
    pub fn empty() -> Self {
        Self {
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_document(path)?;
        if !(0.0..=1.0).contains(&cfg.failure_threshold) {
            bail!("failure_threshold must be within [0, 1]");
        }
        for p in [&cfg.detection, &cfg.debias, &cfg.embedding].into_iter().flatten() {
            p.validate()?;
            if p.provider_kind != ProviderKind::Mock {
                p.resolve_api_key()?;
            }
        }
        Ok(cfg)
    }
}

/// Parses a TOML (`.toml`) or JSON (anything else) document.
pub fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `mock` or a path to a provider config document.
pub fn parse_provider(spec: &str, default_model: &str) -> Result<ProviderConfig> {
    if spec == "mock" {
        return Ok(ProviderConfig::mock(default_model));
    }
    read_document(Path::new(spec))
}

/// Picks the provider from the flag, then the run config section.
pub fn choose_provider(
    flag: Option<&str>,
    section: Option<&ProviderConfig>,
    model: Option<&str>,
    default_model: &str,
    stage: &str,
) -> Result<ProviderConfig> {
    let mut cfg = match (flag, section) {
        (Some(spec), _) => parse_provider(spec, model.unwrap_or(default_model))?,
        (None, Some(c)) => c.clone(),
        (None, None) => bail!("{stage}: no provider given (use --provider or the config file)"),
    };
    if let Some(m) = model {
        cfg.model_id = m.to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Builds a gateway. Remote providers cache under `<run_dir>/cache` by
/// default; the mock is uncached unless a cache directory is requested.
pub fn build_gateway(mut cfg: ProviderConfig, concurrency: Option<usize>, run_dir: &Path) -> Result<Gateway> {
    if let Some(n) = concurrency {
        cfg.max_concurrency = n.max(1);
    }
    let cache = match cfg.provider_kind {
        ProviderKind::Mock => std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from),
        _ => Some(cache_dir_or(run_dir.join("cache"))),
    };
    Ok(Gateway::from_config(cfg, cache)?)
}

/// Digest of a provider config, ignoring the concurrency setting so that
/// runs at different parallelism share a digest.
pub fn config_digest(cfg: &ProviderConfig) -> String {
    let mut c = cfg.clone();
    c.max_concurrency = 0;
    bias_audit::sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
}

/// File-system-safe form of a model id.
pub fn model_file_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}
