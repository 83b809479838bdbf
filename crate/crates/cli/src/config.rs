use std::path::{Path, PathBuf};
use std::time::Duration;

use cutexplore::{BoundingBox, ClipMode, DomainBounds, Execution, ExplorerConfig, StoppingRule, UpdateMode};
use serde::{Deserialize, Serialize};

use crate::output::Format;
use crate::CliError;

/// Flat on-disk run configuration. Every key is optional; unset keys take the
/// unit-square defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub epsilon: f64,
    pub batch_size: usize,
    pub warmup_size: usize,
    pub num_trees: usize,
    pub subsample_size: Option<usize>,
    pub max_iterations: usize,
    pub bounds_min: Vec<f64>,
    pub bounds_max: Vec<f64>,
    pub clip_mode: ClipMode,
    /// Optional warm-up sub-box; both corners or neither.
    pub warmup_min: Option<Vec<f64>>,
    pub warmup_max: Option<Vec<f64>>,
    pub collision_tolerance: f64,
    pub seed: u64,
    pub update_mode: UpdateMode,
    pub parallel: bool,
    pub max_points: Option<usize>,
    pub max_wall_seconds: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub output_format: Format,
    /// Append sample rows as each iteration finishes instead of once at the end.
    pub emit_per_iteration: bool,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let base = ExplorerConfig::unit_cube(2);
        Self {
            epsilon: base.epsilon,
            batch_size: base.batch_size,
            warmup_size: base.warmup_size,
            num_trees: base.num_trees,
            subsample_size: base.subsample_size,
            max_iterations: base.max_iterations,
            bounds_min: base.bounds.bbox.min.clone(),
            bounds_max: base.bounds.bbox.max.clone(),
            clip_mode: base.bounds.clip_mode,
            warmup_min: None,
            warmup_max: None,
            collision_tolerance: base.collision_tolerance,
            seed: base.seed,
            update_mode: base.update_mode,
            parallel: true,
            max_points: None,
            max_wall_seconds: None,
            output_dir: None,
            output_format: Format::Jsonl,
            emit_per_iteration: false,
        }
    }
}

impl RunConfigFile {
    /// Reads `path` (or defaults when `None`) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        if overrides.is_empty() {
            return toml::from_str(&text).map_err(|e| config_error(path, e));
        }
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| config_error(path, e))?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
            table.insert(key.trim().to_owned(), parse_value(value.trim()));
        }
        Self::deserialize(table).map_err(|e| CliError::Config(format!("override: {}", e.message())))
    }

    pub fn explorer_config(&self) -> Result<ExplorerConfig, CliError> {
        if self.bounds_min.len() != self.bounds_max.len() {
            return Err(invalid("bounds_max", format!("has {} values but bounds_min has {}", self.bounds_max.len(), self.bounds_min.len())));
        }
        let bbox = BoundingBox::new(self.bounds_min.clone(), self.bounds_max.clone())
            .map_err(|e| invalid("bounds_min", e.to_string()))?;
        let bounds =
            DomainBounds::new(bbox, self.clip_mode).map_err(|e| invalid("bounds_min", e.to_string()))?;
        let warmup_region = match (&self.warmup_min, &self.warmup_max) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                Some(BoundingBox::new(lo.clone(), hi.clone()).map_err(|e| invalid("warmup_min", e.to_string()))?)
            }
            (Some(_), None) => return Err(invalid("warmup_max", "is required when warmup_min is set")),
            (None, Some(_)) => return Err(invalid("warmup_min", "is required when warmup_max is set")),
        };
        let config = ExplorerConfig {
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            warmup_size: self.warmup_size,
            num_trees: self.num_trees,
            subsample_size: self.subsample_size,
            max_iterations: self.max_iterations,
            bounds,
            warmup_region,
            collision_tolerance: self.collision_tolerance,
            seed: self.seed,
            update_mode: self.update_mode,
            execution: if self.parallel { Execution::Parallel } else { Execution::Sequential },
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn stopping_rule(&self) -> Result<StoppingRule, CliError> {
        let wall_clock = match self.max_wall_seconds {
            None => None,
            Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
            Some(s) => return Err(invalid("max_wall_seconds", format!("must be positive, got {s}"))),
        };
        Ok(StoppingRule { max_points: self.max_points, wall_clock })
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid configuration: `{field}` {reason}"))
}

fn config_error(path: Option<&Path>, e: toml::de::Error) -> CliError {
    let name = path.map_or_else(|| "<defaults>".to_owned(), |p| p.display().to_string());
    CliError::Config(format!("{name}: {e}"))
}

/// TOML literal when it parses as one, otherwise a bare string (so
/// `clip_mode=reject` works without quotes).
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, overrides: &[&str]) -> Result<RunConfigFile, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfigFile::load(Some(&path), &overrides)
    }

    #[test]
    fn defaults_are_valid() {
        let c = RunConfigFile::load(None, &[]).unwrap();
        assert_eq!(c, RunConfigFile::default());
        c.explorer_config().unwrap();
    }

    #[test]
    fn overrides_take_literals_and_bare_strings() {
        let c = load_str("epsilon = 0.2\nseed = 3\n", &["seed=9", "clip_mode=reject", "bounds_max=[2.0, 2.0]"]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.epsilon, 0.2);
        assert_eq!(c.clip_mode, ClipMode::Reject);
        assert_eq!(c.bounds_max, vec![2.0, 2.0]);
    }

    #[test]
    fn errors_name_line_or_field() {
        let msg = load_str("seed = 1\nepsilonn = 0.1\n", &[]).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("epsilonn"), "{msg}");
        let msg = load_str("epsilon = \"wide\"\n", &[]).unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
        let msg = load_str("", &["bogus=1"]).unwrap_err().to_string();
        assert!(msg.contains("bogus"), "{msg}");
        let msg = load_str("epsilon = -1.0\n", &[]).unwrap().explorer_config().unwrap_err().to_string();
        assert!(msg.contains("`epsilon`"), "{msg}");
        let msg = load_str("bounds_max = [1.0]\n", &[]).unwrap().explorer_config().unwrap_err().to_string();
        assert!(msg.contains("`bounds_max`"), "{msg}");
        assert!(load_str("", &["novalue"]).is_err());
    }
}
