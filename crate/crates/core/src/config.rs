//! Experiment configuration: one strict JSON document drives every stage.
//!
//! Unknown keys are rejected, all scale relations are validated up front, and
//! the canonical content hash (key-order independent) names the output tree,
//! so identical configurations always land in the same artifact directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::environment::SingleSiteProfile;
use crate::geometry::{build_fractal_system, FractalSystem, SimilitudeSystem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Fractal source: a builtin name or explicit similitudes.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FractalSpec {
    Builtin { builtin: String },
    Custom { similitudes: SimilitudeSystem },
}

impl FractalSpec {
    pub fn build(&self, validation_depth: u32) -> Result<FractalSystem, ConfigError> {
        let sim = match self {
            FractalSpec::Builtin { builtin } => match builtin.as_str() {
                "sierpinski-gasket" => SimilitudeSystem::sierpinski_gasket(),
                "vicsek-cross" => SimilitudeSystem::vicsek_cross(),
                "hex-snowflake" => SimilitudeSystem::hex_snowflake(),
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown builtin fractal {other:?}"
                    )))
                }
            },
            FractalSpec::Custom { similitudes } => similitudes.clone(),
        };
        build_fractal_system(sim, validation_depth).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Geometric or explicit evaluation grid.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridSpec {
    Geometric {
        start: f64,
        stop: f64,
        per_decade: usize,
    },
    Explicit {
        points: Vec<f64>,
    },
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Explicit { points } => points.clone(),
            GridSpec::Geometric {
                start,
                stop,
                per_decade,
            } => {
                let decades = (stop / start).log10();
                let n = ((decades * *per_decade as f64).ceil() as usize).max(1) + 1;
                (0..n)
                    .map(|i| start * (stop / start).powf(i as f64 / (n - 1) as f64))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceCaps {
    pub max_vertices: usize,
    pub max_samples: usize,
    pub max_cells: usize,
}

impl Default for ResourceCaps {
    fn default() -> Self {
        ResourceCaps {
            max_vertices: 20_000,
            max_samples: 10_000,
            max_cells: 1 << 22,
        }
    }
}

fn default_padding() -> i32 {
    1
}
fn default_output() -> String {
    "out".into()
}
fn default_cache() -> String {
    ".fractal-ids-cache".into()
}
fn default_validation_depth() -> u32 {
    2
}
fn default_scaling_depths() -> Vec<u32> {
    vec![1, 2, 3, 4]
}
fn default_t_grid() -> GridSpec {
    GridSpec::Geometric {
        start: 1.0,
        stop: 1e3,
        per_decade: 8,
    }
}
fn default_lambda_grid() -> GridSpec {
    GridSpec::Geometric {
        start: 1e-4,
        stop: 10.0,
        per_decade: 8,
    }
}

/// The experiment description consumed by every CLI stage.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fractal: FractalSpec,
    /// Window sizes to measure.
    pub windows: Vec<i32>,
    /// Grid resolution (cell scale of the discretization).
    #[serde(default)]
    pub resolution: i32,
    #[serde(default = "default_padding")]
    pub padding: i32,
    pub phi: BernsteinFunction,
    pub profile: SingleSiteProfile,
    pub intensities: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_t_grid")]
    pub t_grid: GridSpec,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: GridSpec,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default = "default_cache")]
    pub cache_dir: String,
    #[serde(default)]
    pub caps: ResourceCaps,
    /// Worker threads for the sample pool; 0 uses the runtime default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_validation_depth")]
    pub validation_depth: u32,
    #[serde(default = "default_scaling_depths")]
    pub time_scaling_depths: Vec<u32>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.windows.is_empty() {
            return Err(ConfigError::Invalid("windows must not be empty".into()));
        }
        let min_window = *self.windows.iter().min().unwrap();
        if self.resolution > min_window {
            return Err(ConfigError::Invalid(format!(
                "resolution {} exceeds smallest window {min_window}",
                self.resolution
            )));
        }
        if self.padding < 1 {
            return Err(ConfigError::Invalid("padding must be at least 1".into()));
        }
        self.phi
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.profile
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.profile.support_scale() >= min_window {
            return Err(ConfigError::Invalid(format!(
                "profile support scale {} must stay below the smallest window {min_window}",
                self.profile.support_scale()
            )));
        }
        if self.resolution > self.profile.floor_scale() {
            return Err(ConfigError::Invalid(format!(
                "resolution {} is coarser than the profile floor scale {}",
                self.resolution,
                self.profile.floor_scale()
            )));
        }
        if self.intensities.is_empty() || self.intensities.iter().any(|&v| v <= 0.0) {
            return Err(ConfigError::Invalid(
                "intensities must be positive and nonempty".into(),
            ));
        }
        if self.samples == 0 {
            return Err(ConfigError::Invalid("samples must be positive".into()));
        }
        if self.samples > self.caps.max_samples {
            return Err(ConfigError::Invalid(format!(
                "samples {} exceed the cap {}",
                self.samples, self.caps.max_samples
            )));
        }
        if self.caps.max_vertices == 0 || self.caps.max_cells == 0 {
            return Err(ConfigError::Invalid(
                "resource caps must be positive".into(),
            ));
        }
        if self.time_scaling_depths.len() < 2 {
            return Err(ConfigError::Invalid(
                "need at least two time-scaling depths".into(),
            ));
        }
        for grid in [&self.t_grid, &self.lambda_grid] {
            if let GridSpec::Geometric { start, stop, .. } = grid {
                if !(*start > 0.0 && stop > start) {
                    return Err(ConfigError::Invalid("grids must be increasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical content hash: independent of key order in the document.
    pub fn canonical_hash(&self) -> String {
        crate::hash::hash_value(self)
    }

    /// `output_dir/<config hash>`.
    pub fn output_root(&self) -> PathBuf {
        PathBuf::from(&self.output_dir).join(self.canonical_hash())
    }

    /// Cache root, honoring the `FRACTAL_IDS_CACHE` environment variable.
    pub fn cache_root(&self) -> PathBuf {
        match std::env::var_os("FRACTAL_IDS_CACHE") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.cache_dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn sample_json() -> String {
        r#"{
            "fractal": {"builtin": "sierpinski-gasket"},
            "windows": [2, 3],
            "resolution": 0,
            "phi": {"family": "stable", "exponent": 0.5},
            "profile": {"kind": "indicator", "amplitude": 1.0, "support_scale": 0},
            "intensities": [1.0],
            "samples": 10,
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(&sample_json()).unwrap();
        assert_eq!(cfg.windows, vec![2, 3]);
        assert_eq!(cfg.padding, 1);
        assert!(cfg.t_grid.points().len() > 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = sample_json().replace("\"seed\": 7", "\"seed\": 7, \"mystery\": 1");
        assert!(matches!(
            ExperimentConfig::from_json(&bad),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn scale_order_is_validated() {
        let bad = sample_json().replace("\"resolution\": 0", "\"resolution\": 4");
        assert!(matches!(
            ExperimentConfig::from_json(&bad),
            Err(ConfigError::Invalid(_))
        ));
        let bad = sample_json().replace("\"support_scale\": 0", "\"support_scale\": 2");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = ExperimentConfig::from_json(&sample_json()).unwrap();
        let reordered = r#"{
            "seed": 7,
            "samples": 10,
            "intensities": [1.0],
            "profile": {"support_scale": 0, "kind": "indicator", "amplitude": 1.0},
            "phi": {"exponent": 0.5, "family": "stable"},
            "resolution": 0,
            "windows": [2, 3],
            "fractal": {"builtin": "sierpinski-gasket"}
        }"#;
        let b = ExperimentConfig::from_json(reordered).unwrap();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        // and it reacts to content
        let c = ExperimentConfig::from_json(&sample_json().replace("\"seed\": 7", "\"seed\": 8"))
            .unwrap();
        assert_ne!(a.canonical_hash(), c.canonical_hash());
    }

    #[test]
    fn builtin_names_resolve() {
        for name in ["sierpinski-gasket", "vicsek-cross", "hex-snowflake"] {
            let spec = FractalSpec::Builtin {
                builtin: name.into(),
            };
            assert!(spec.build(1).is_ok(), "{name}");
        }
        assert!(FractalSpec::Builtin {
            builtin: "moon".into()
        }
        .build(1)
        .is_err());
    }

    #[test]
    fn grid_specs() {
        let g = GridSpec::Geometric {
            start: 1.0,
            stop: 100.0,
            per_decade: 4,
        };
        let pts = g.points();
        assert!((pts[0] - 1.0).abs() < 1e-12);
        assert!((pts.last().unwrap() - 100.0).abs() < 1e-9);
        let e = GridSpec::Explicit {
            points: vec![1.0, 5.0, 25.0],
        };
        assert_eq!(e.points(), vec![1.0, 5.0, 25.0]);
    }
}
