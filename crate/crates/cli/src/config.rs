//! TOML run configuration. Credentials come only from the environment.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub parallel: Option<usize>,
    pub strict: Option<bool>,
    pub cache_dir: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub prefix_table: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub rate_per_sec: Option<f64>,
    pub max_failure_rate: Option<f64>,
    #[serde(default)]
    pub llm: Profile,
    #[serde(default)]
    pub mllm: Profile,
    #[serde(default)]
    pub embed: Profile,
    #[serde(default)]
    pub temperatures: Temperatures,
    #[serde(default)]
    pub mock: MockConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub base_url: Option<String>,
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Temperatures {
    pub caption: Option<f64>,
    pub keyinfo: Option<f64>,
    pub intention: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    pub seed: Option<u64>,
    /// jsonl of `{"id": <request tag>, "text": <reply>}`.
    pub fixtures: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.cache_dir,
            &mut cfg.template_dir,
            &mut cfg.prefix_table,
            &mut cfg.image_root,
            &mut cfg.mock.fixtures,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.parallel == Some(0) {
            return Err(UsageError("parallel must be at least 1".into()));
        }
        if let Some(r) = self.rate_per_sec {
            if r.is_nan() || r < 0.0 {
                return Err(UsageError("rate_per_sec must be zero or positive".into()));
            }
        }
        if let Some(dir) = &self.template_dir {
            if !dir.is_dir() {
                return Err(UsageError(format!("template_dir {} does not exist", dir.display())));
            }
        }
        if let Some(dir) = &self.cache_dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| UsageError(format!("cache_dir {} is not creatable: {e}", dir.display())))?;
        }
        Ok(())
    }
}
