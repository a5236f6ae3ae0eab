//! Run configuration files (JSON or TOML) with preset selection and
//! partial overrides of the model configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shapecomp_core::completion::CompletionConfig;
use shapecomp_core::partial::ShapeFamilyConfig;
use shapecomp_core::vae::VaeConfig;

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::fs::read_text;

/// Everything a run can be configured with. Missing sections take their
/// defaults; `vae` holds only the keys that override the chosen preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub vae: serde_json::Map<String, serde_json::Value>,
    pub family: ShapeFamilyConfig,
    pub completion: CompletionConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            vae: serde_json::Map::new(),
            family: ShapeFamilyConfig::default(),
            completion: CompletionConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

pub const DEFAULT_PRESET: &str = "paper";

pub fn preset(name: &str) -> Result<VaeConfig> {
    VaeConfig::preset(name).ok_or_else(|| Error::Usage(format!("unknown preset '{name}' (paper, desk, face)")))
}

fn merge(base: &mut serde_json::Value, overrides: &serde_json::Map<String, serde_json::Value>) {
    if let serde_json::Value::Object(map) = base {
        for (k, v) in overrides {
            match (map.get_mut(k), v) {
                (Some(slot @ serde_json::Value::Object(_)), serde_json::Value::Object(o)) => merge(slot, o),
                _ => {
                    map.insert(k.clone(), v.clone());
                }
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| {
                let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
                parse_err(line, e.message().to_string())
            }),
            _ => serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string())),
        }
    }

    /// The named preset (flag, then file, then the full-scale default) with
    /// the file's `vae` overrides applied.
    pub fn vae_config(&self, preset_flag: Option<&str>) -> Result<VaeConfig> {
        let name = preset_flag.or(self.preset.as_deref()).unwrap_or(DEFAULT_PRESET);
        let mut value = serde_json::to_value(preset(name)?).map_err(|e| Error::Usage(e.to_string()))?;
        merge(&mut value, &self.vae);
        let config: VaeConfig =
            serde_json::from_value(value).map_err(|e| Error::Usage(format!("invalid vae override: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}
