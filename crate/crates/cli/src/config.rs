//! Pipeline configuration files and dotted-key overrides.

use std::fs;
use std::path::{Path, PathBuf};

use fitngp::evaluation::benchmark::BenchmarkConfig;
use fitngp::pipeline::{InitConfig, ModelConfig};
use fitngp::density_field::RenderOptions;
use fitngp::fitting::FitConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub grid: PathBuf,
    /// A camera object or a list of cameras.
    pub camera: PathBuf,
    /// Mask manifest mapping labels to mask images and model meshes.
    pub masks: PathBuf,
    #[serde(default)]
    pub symmetries: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Score the fit against `paths.ground_truth` when it is set.
    pub enabled: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Makes relative paths relative to `base` and checks that inputs exist.
    pub fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        let p = &mut self.paths;
        for path in [&mut p.grid, &mut p.camera, &mut p.masks, &mut p.output_dir] {
            *path = join(base, path);
        }
        for path in [&mut p.symmetries, &mut p.ground_truth].into_iter().flatten() {
            *path = join(base, path);
        }
        let required = [Some(&p.grid), Some(&p.camera), Some(&p.masks), p.symmetries.as_ref(), p.ground_truth.as_ref()];
        for path in required.into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::Config(format!("input not found: {}", path.display())));
            }
        }
        self.fit.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Benchmark runs for the `ablate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub benchmark: BenchmarkConfig,
    pub seeds: Vec<u64>,
    /// When set, run the noise sweep (full variant only) instead.
    pub noise_levels: Option<Vec<f64>>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            benchmark: BenchmarkConfig::default(),
            seeds: (0..8).collect(),
            noise_levels: None,
        }
    }
}

pub fn join(base: &Path, path: &Path) -> PathBuf {
    if path.is_relative() {
        base.join(path)
    } else {
        path.to_path_buf()
    }
}

/// Parses `key.sub=value` into a path and a JSON value; values that are not
/// valid JSON are taken as strings.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{text}' must look like key=value")))?;
    let parts: Vec<String> = key.split('.').map(str::to_string).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key '{key}'")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((parts, value))
}

pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut node = root;
    for (depth, key) in path.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("override key '{}' crosses a non-object", path[..depth].join(".")))
        })?;
        if depth + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Reads a JSON config, applies overrides, and deserializes it.
pub fn load_with_overrides<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        let (key, v) = parse_override(o)?;
        apply_override(&mut value, &key, v)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
