//! Pipeline configuration: one TOML file with a section per stage.
//!
//! Keys may be written sectioned (`[icp]` then `max_iterations = 50`) or
//! dotted (`icp.max_iterations = 50`). Unknown keys are errors. `--set`
//! overrides use the same dotted keys and are applied before validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scaffold_core::deviation::Palette;
use scaffold_core::graphdiff::DiffParams;
use scaffold_core::registration::IcpParams;
use scaffold_core::segmentation::RansacParams;
use scaffold_core::structure::{ElementPalette, StructureParams};

use crate::io::SaveFormat;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds every randomised stage (RANSAC sampling).
    pub seed: u64,
    /// Format of the cloud files written by the pipeline.
    pub cloud_format: SaveFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            cloud_format: SaveFormat::PlyBinary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub inlier_distance: f64,
    pub max_iterations: usize,
    pub min_inlier_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        let d = RansacParams::default();
        RansacConfig {
            inlier_distance: d.inlier_distance,
            max_iterations: d.max_iterations,
            min_inlier_fraction: d.min_inlier_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub downsample: bool,
    pub voxel_size: f64,
    pub remove_outliers: bool,
    pub outlier_k: usize,
    pub outlier_std_ratio: f64,
    pub remove_planes: bool,
    pub n_planes: usize,
    pub ransac: RansacConfig,
    /// Angular tolerance used to tell the ground and the wall apart.
    pub plane_tolerance_deg: f64,
    pub crop: bool,
    /// Points farther than this in front of the wall are dropped.
    pub crop_distance: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            downsample: true,
            voxel_size: 0.02,
            remove_outliers: true,
            outlier_k: 20,
            outlier_std_ratio: 2.0,
            remove_planes: true,
            n_planes: 2,
            ransac: RansacConfig::default(),
            plane_tolerance_deg: 15.0,
            crop: true,
            crop_distance: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAlignment {
    #[default]
    Identity,
    /// Translate the current centroid onto the reference centroid first.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    pub convergence_delta: f64,
    /// `inf` disables correspondence rejection.
    pub max_correspondence_distance: f64,
    pub initial: InitialAlignment,
}

impl Default for IcpConfig {
    fn default() -> Self {
        let d = IcpParams::default();
        IcpConfig {
            max_iterations: d.max_iterations,
            convergence_delta: d.convergence_delta,
            max_correspondence_distance: d.max_correspondence_distance,
            initial: InitialAlignment::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviationConfig {
    pub threshold_fraction: f64,
    /// Denominator of the threshold. Unset: the reference graph's median
    /// vertical edge length when there is one, else 1 m.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characteristic_length: Option<f64>,
    /// Unset: twice the voxel size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_distance: Option<f64>,
    /// The alert fires when more than this fraction of points exceed.
    pub alarm_level: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            threshold_fraction: 0.05,
            characteristic_length: None,
            match_distance: None,
            alarm_level: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaletteConfig {
    pub deviation: Palette,
    pub elements: ElementPalette,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: RunConfig,
    pub preprocess: PreprocessConfig,
    pub icp: IcpConfig,
    pub deviation: DeviationConfig,
    pub structure: StructureParams,
    pub diff: DiffParams,
    pub palette: PaletteConfig,
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        reason: reason.to_string(),
    }
}

impl PipelineConfig {
    /// Reads `path` (if any), applies the overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_owned()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn ransac_params(&self) -> RansacParams {
        let r = &self.preprocess.ransac;
        RansacParams {
            inlier_distance: r.inlier_distance,
            max_iterations: r.max_iterations,
            min_inlier_fraction: r.min_inlier_fraction,
            seed: self.run.seed,
        }
    }

    pub fn icp_params(&self) -> IcpParams {
        IcpParams {
            max_iterations: self.icp.max_iterations,
            convergence_delta: self.icp.convergence_delta,
            max_correspondence_distance: self.icp.max_correspondence_distance,
            ..IcpParams::default()
        }
    }

    pub fn match_distance(&self) -> f64 {
        self.deviation
            .match_distance
            .unwrap_or(2.0 * self.preprocess.voxel_size)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.preprocess;
        if !(p.voxel_size > 0.0 && p.voxel_size.is_finite()) {
            return Err(invalid("preprocess.voxel_size", "must be a positive length"));
        }
        if p.outlier_k == 0 {
            return Err(invalid("preprocess.outlier_k", "must be at least 1"));
        }
        if !(p.outlier_std_ratio > 0.0) {
            return Err(invalid("preprocess.outlier_std_ratio", "must be positive"));
        }
        if p.n_planes == 0 {
            return Err(invalid("preprocess.n_planes", "must be at least 1"));
        }
        if !(0.0..=90.0).contains(&p.plane_tolerance_deg) {
            return Err(invalid("preprocess.plane_tolerance_deg", "must lie in [0, 90]"));
        }
        if !(p.crop_distance > 0.0) {
            return Err(invalid("preprocess.crop_distance", "must be positive"));
        }
        self.ransac_params()
            .validate()
            .map_err(|e| invalid("preprocess.ransac", e))?;
        self.icp_params().validate().map_err(|e| invalid("icp", e))?;
        let d = &self.deviation;
        if !(d.threshold_fraction > 0.0 && d.threshold_fraction.is_finite()) {
            return Err(invalid("deviation.threshold_fraction", "must be positive"));
        }
        if let Some(l) = d.characteristic_length {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("deviation.characteristic_length", "must be a positive length"));
            }
        }
        if let Some(m) = d.match_distance {
            if !(m > 0.0) {
                return Err(invalid("deviation.match_distance", "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&d.alarm_level) {
            return Err(invalid("deviation.alarm_level", "must lie in [0, 1]"));
        }
        self.structure.validate().map_err(|e| invalid("structure", e))?;
        if !(self.diff.node_tolerance > 0.0) {
            return Err(invalid("diff.node_tolerance", "must be positive"));
        }
        if !(self.diff.deviation_tolerance >= 0.0) {
            return Err(invalid("diff.deviation_tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// `a.b.c=value`, with `value` read as a TOML value and taken as a plain
/// string when it does not parse as one.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.to_owned()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::BadOverride(spec.to_owned()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("non-empty key");
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(invalid(key, format!("`{part}` is not a section"))),
        };
    }
    node.insert(leaf.to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn infinite_rejection_radius_round_trips() {
        let c = PipelineConfig::load(None, &["icp.max_correspondence_distance=inf".into()]).unwrap();
        assert!(c.icp.max_correspondence_distance.is_infinite());
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = PipelineConfig::from_toml_str("[icp]\nmax_iteration = 3\n").unwrap_err();
        assert!(e.to_string().contains("max_iteration"), "{e}");
        assert!(PipelineConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(PipelineConfig::load(None, &["structure.joints.radius=0.1".into()]).is_err());
    }

    #[test]
    fn dotted_and_sectioned_keys_agree() {
        let a = PipelineConfig::from_toml_str("icp.max_iterations = 7\n").unwrap();
        let b = PipelineConfig::from_toml_str("[icp]\nmax_iterations = 7\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.icp.max_iterations, 7);
    }

    #[test]
    fn overrides_win_and_are_typed() {
        let c = PipelineConfig::load(
            None,
            &[
                "run.seed=42".into(),
                "icp.initial=centroid".into(),
                "structure.joints.merge_radius = 0.2".into(),
                "preprocess.crop=false".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.run.seed, 42);
        assert_eq!(c.ransac_params().seed, 42);
        assert_eq!(c.icp.initial, InitialAlignment::Centroid);
        assert_eq!(c.structure.joints.merge_radius, 0.2);
        assert!(!c.preprocess.crop);
        assert!(matches!(
            PipelineConfig::load(None, &["noequals".into()]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(PipelineConfig::load(None, &["icp.max_iterations=0".into()]).is_err());
        assert!(PipelineConfig::load(None, &["run.seed.x=1".into()]).is_err());
    }

    #[test]
    fn match_distance_defaults_to_twice_the_voxel() {
        let c = PipelineConfig::default();
        assert_eq!(c.match_distance(), 0.04);
    }
}
