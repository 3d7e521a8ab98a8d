use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::association::AssociationConfig;
use crate::dcf::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::metrics::EvalConfig;

/// Where frames, detections and the first-frame boxes come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Directory of `frame_00000.png`, ...
    pub frames: Option<PathBuf>,
    /// `frame,x,y,w,h,confidence` CSV.
    pub detections: Option<PathBuf>,
    /// `id,x,y,w,h` CSV.
    pub initial_boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write simulated frames as PNG files.
    pub write_frames: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_frames: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Fan per-track work out over the pool.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub tracker: TrackerConfig,
    pub association: AssociationConfig,
    pub eval: EvalConfig,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub run: RunConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.tracker.validate()?;
        self.association.validate()?;
        self.eval.validate()
    }

    /// Checks that configured input paths exist.
    pub fn check_inputs(&self) -> Result<()> {
        let inputs = [&self.input.frames, &self.input.detections, &self.input.initial_boxes];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("input path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Parses TOML text with `section.key=value` overrides applied on top.
    /// Override values are read as TOML, falling back to a plain string.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file (or the defaults when `path` is `None`) and applies
    /// the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not section.key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is not section.key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
