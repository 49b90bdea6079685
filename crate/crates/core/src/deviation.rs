//! Per-point comparison of an aligned campaign scan against the reference:
//! nearest-reference distances, threshold severity labels and the
//! matched/modified change map, plus their color conventions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::index::SpatialIndex;
use crate::{Error, PointCloud, Result, Rgb};

/// Distance from every current point to its nearest reference point.
pub fn cloud_distances(current_aligned: &PointCloud, reference_index: &SpatialIndex) -> Result<Vec<f64>> {
    if reference_index.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(current_aligned
        .points()
        .iter()
        .map(|p| reference_index.nearest(p).1)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationLabel {
    Within,
    Exceeding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub distances: Vec<f64>,
    /// Absolute threshold in meters.
    pub threshold: f64,
    pub threshold_fraction: f64,
    pub characteristic_length: f64,
    pub labels: Vec<DeviationLabel>,
    pub exceeding_fraction: f64,
}

impl DeviationReport {
    pub fn exceeding_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l == DeviationLabel::Exceeding)
            .count()
    }

    pub fn exceeding_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == DeviationLabel::Exceeding)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Labels each distance against `threshold_fraction × characteristic_length`.
/// A distance exactly at the threshold is within.
pub fn classify_deviation(
    distances: &[f64],
    threshold_fraction: f64,
    characteristic_length: f64,
) -> Result<DeviationReport> {
    if !(threshold_fraction > 0.0) || !threshold_fraction.is_finite() {
        return Err(Error::param("threshold_fraction", "must be positive"));
    }
    if !(characteristic_length > 0.0) || !characteristic_length.is_finite() {
        return Err(Error::param("characteristic_length", "must be positive"));
    }
    let threshold = threshold_fraction * characteristic_length;
    let labels: Vec<DeviationLabel> = distances
        .iter()
        .map(|&d| {
            if d > threshold {
                DeviationLabel::Exceeding
            } else {
                DeviationLabel::Within
            }
        })
        .collect();
    let exceeding = labels.iter().filter(|&&l| l == DeviationLabel::Exceeding).count();
    let exceeding_fraction = if labels.is_empty() {
        0.0
    } else {
        exceeding as f64 / labels.len() as f64
    };
    Ok(DeviationReport {
        distances: distances.to_vec(),
        threshold,
        threshold_fraction,
        characteristic_length,
        labels,
        exceeding_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeLabel {
    Matched,
    Modified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMap {
    pub labels: Vec<ChangeLabel>,
    pub match_distance: f64,
}

impl ChangeMap {
    pub fn modified_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == ChangeLabel::Modified).count()
    }
}

/// Matched iff the nearest reference point is within `match_distance`.
pub fn change_map(current_aligned: &PointCloud, reference_index: &SpatialIndex, match_distance: f64) -> Result<ChangeMap> {
    if !(match_distance > 0.0) {
        return Err(Error::param("match_distance", "must be positive"));
    }
    let distances = cloud_distances(current_aligned, reference_index)?;
    Ok(change_map_from_distances(&distances, match_distance))
}

pub fn change_map_from_distances(distances: &[f64], match_distance: f64) -> ChangeMap {
    ChangeMap {
        labels: distances
            .iter()
            .map(|&d| {
                if d <= match_distance {
                    ChangeLabel::Matched
                } else {
                    ChangeLabel::Modified
                }
            })
            .collect(),
        match_distance,
    }
}

/// Export colors for the four per-point labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Palette {
    pub matched: Rgb,
    pub modified: Rgb,
    pub within: Rgb,
    pub exceeding: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            matched: [0, 0, 255],
            modified: [255, 255, 0],
            within: [0, 255, 0],
            exceeding: [255, 0, 0],
        }
    }
}

pub trait PaletteLabel {
    fn color(&self, palette: &Palette) -> Rgb;
}

impl PaletteLabel for ChangeLabel {
    fn color(&self, palette: &Palette) -> Rgb {
        match self {
            ChangeLabel::Matched => palette.matched,
            ChangeLabel::Modified => palette.modified,
        }
    }
}

impl PaletteLabel for DeviationLabel {
    fn color(&self, palette: &Palette) -> Rgb {
        match self {
            DeviationLabel::Within => palette.within,
            DeviationLabel::Exceeding => palette.exceeding,
        }
    }
}

/// The cloud recolored by label.
pub fn colorize<L: PaletteLabel>(cloud: &PointCloud, labels: &[L], palette: &Palette) -> Result<PointCloud> {
    if labels.len() != cloud.len() {
        return Err(Error::LabelLengthMismatch {
            points: cloud.len(),
            labels: labels.len(),
        });
    }
    cloud
        .clone()
        .with_colors(labels.iter().map(|l| l.color(palette)).collect())
}
