//! The inspection stages on in-memory clouds. File handling lives in
//! [`crate::commands`].

use std::fmt;

use serde::Serialize;

use scaffold_core::cloud::{remove_statistical_outliers, voxel_downsample};
use scaffold_core::deviation::{change_map_from_distances, classify_deviation, cloud_distances, ChangeMap, DeviationReport};
use scaffold_core::graphdiff::{compare_graphs, GraphDiff};
use scaffold_core::registration::{apply_transform, centroid_shift, icp, IcpResult};
use scaffold_core::segmentation::{crop_indices, identify_planes, remove_planes, PlaneModel};
use scaffold_core::structure::{extract_structure, Orientation, ScaffoldGraph, StructureResult};
use scaffold_core::{PointCloud, SpatialIndex};

use crate::config::{InitialAlignment, PipelineConfig};

/// Pipeline stages; each failure is reported under one of these, and the
/// process exit code tells them apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Preprocess,
    Register,
    Deviate,
    Graph,
    Diff,
    Export,
    Synth,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Register => "register",
            Stage::Deviate => "deviate",
            Stage::Graph => "graph",
            Stage::Diff => "diff",
            Stage::Export => "export",
            Stage::Synth => "synth",
        }
    }

    /// Exit status for a failure in this stage. 2 is left to argument errors.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Load => 4,
            Stage::Preprocess => 5,
            Stage::Register => 6,
            Stage::Deviate => 7,
            Stage::Graph => 8,
            Stage::Diff => 9,
            Stage::Export => 10,
            Stage::Synth => 11,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneSummary {
    /// `ground`, `wall` or `other`.
    pub role: &'static str,
    pub normal: [f64; 3],
    pub offset: f64,
    pub inlier_count: usize,
}

/// Point counts after each preprocessing step; skipped steps repeat the
/// previous count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub input_points: usize,
    pub after_downsample: usize,
    pub after_outliers: usize,
    pub after_planes: usize,
    pub after_crop: usize,
    pub planes: Vec<PlaneSummary>,
    pub notes: Vec<String>,
}

/// Downsample, drop outliers, remove the dominant planes and crop to the
/// band in front of the wall, as enabled in the configuration.
pub fn preprocess(cloud: &PointCloud, config: &PipelineConfig) -> Result<(PointCloud, PreprocessSummary), PipelineError> {
    let p = &config.preprocess;
    let mut notes = Vec::new();
    let input_points = cloud.len();
    if cloud.is_empty() {
        return Err(PipelineError::new(Stage::Preprocess, "input cloud is empty"));
    }
    let mut current = if p.downsample {
        voxel_downsample(cloud, p.voxel_size).stage(Stage::Preprocess)?
    } else {
        cloud.clone()
    };
    let after_downsample = current.len();

    if p.remove_outliers {
        if current.len() > p.outlier_k {
            current = remove_statistical_outliers(&current, p.outlier_k, p.outlier_std_ratio).stage(Stage::Preprocess)?;
        } else {
            notes.push(format!("outlier removal skipped: {} points, k = {}", current.len(), p.outlier_k));
        }
    }
    let after_outliers = current.len();

    let mut planes = Vec::new();
    let mut wall: Option<PlaneModel> = None;
    if p.remove_planes && current.len() >= 3 {
        let removal = remove_planes(&current, p.n_planes, &config.ransac_params()).stage(Stage::Preprocess)?;
        if let Some(e) = &removal.stopped_early {
            notes.push(format!("plane removal stopped after {} plane(s): {e}", removal.planes.len()));
        }
        let roles = identify_planes(&removal.planes, p.plane_tolerance_deg);
        for (i, plane) in removal.planes.iter().enumerate() {
            let role = if roles.ground == Some(i) {
                "ground"
            } else if roles.wall == Some(i) {
                "wall"
            } else {
                "other"
            };
            planes.push(PlaneSummary {
                role,
                normal: plane.normal,
                offset: plane.offset,
                inlier_count: plane.inlier_count,
            });
        }
        wall = roles.wall.map(|i| removal.planes[i].clone());
        current = removal.remaining;
    }
    let after_planes = current.len();

    if p.crop {
        match &wall {
            Some(w) if !current.is_empty() => {
                let keep = crop_indices(&current, w, p.crop_distance).stage(Stage::Preprocess)?;
                current = current.select(&keep);
            }
            _ => notes.push("crop skipped: no wall plane".to_owned()),
        }
    }
    let after_crop = current.len();
    if current.is_empty() {
        return Err(PipelineError::new(Stage::Preprocess, "no points left after preprocessing"));
    }
    Ok((
        current,
        PreprocessSummary {
            input_points,
            after_downsample,
            after_outliers,
            after_planes,
            after_crop,
            planes,
            notes,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub result: IcpResult,
    pub aligned: PointCloud,
}

/// ICP of `current` onto `reference`; the returned cloud is `current` in
/// the reference frame.
pub fn register(reference: &PointCloud, current: &PointCloud, config: &PipelineConfig) -> Result<Registration, PipelineError> {
    let mut params = config.icp_params();
    if config.icp.initial == InitialAlignment::Centroid {
        params.initial = centroid_shift(reference, current).stage(Stage::Register)?;
    }
    let result = icp(reference, current, &params).stage(Stage::Register)?;
    let aligned = apply_transform(current, &result.transform);
    Ok(Registration { result, aligned })
}

/// Where the deviation threshold's length scale came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthSource {
    Config,
    ReferenceGraph,
    Default,
}

#[derive(Debug, Clone)]
pub struct Deviation {
    pub report: DeviationReport,
    pub change: ChangeMap,
    pub length_source: LengthSource,
}

/// The length the threshold fraction applies to.
pub fn characteristic_length(config: &PipelineConfig, reference_graph: Option<&ScaffoldGraph>) -> (f64, LengthSource) {
    if let Some(l) = config.deviation.characteristic_length {
        return (l, LengthSource::Config);
    }
    match reference_graph.and_then(ScaffoldGraph::median_vertical_length) {
        Some(l) if l > 0.0 => (l, LengthSource::ReferenceGraph),
        _ => (1.0, LengthSource::Default),
    }
}

/// Per-point distances from the aligned current cloud to the reference,
/// with the threshold labels and the change map.
pub fn deviate(
    reference: &PointCloud,
    aligned: &PointCloud,
    config: &PipelineConfig,
    reference_graph: Option<&ScaffoldGraph>,
) -> Result<Deviation, PipelineError> {
    let index = SpatialIndex::build(reference).stage(Stage::Deviate)?;
    let distances = cloud_distances(aligned, &index).stage(Stage::Deviate)?;
    let (length, length_source) = characteristic_length(config, reference_graph);
    let change = change_map_from_distances(&distances, config.match_distance());
    let report = classify_deviation(&distances, config.deviation.threshold_fraction, length).stage(Stage::Deviate)?;
    Ok(Deviation {
        report,
        change,
        length_source,
    })
}

pub fn graph(cloud: &PointCloud, config: &PipelineConfig) -> Result<StructureResult, PipelineError> {
    extract_structure(cloud, &config.structure).stage(Stage::Graph)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub vertical: usize,
    pub horizontal_x: usize,
    pub horizontal_y: usize,
    pub diagonal: usize,
    pub warnings: usize,
    pub clusters: usize,
    pub mixed_clusters: usize,
    pub short_clusters: usize,
}

impl GraphSummary {
    pub fn of(s: &StructureResult) -> Self {
        let g = &s.graph;
        GraphSummary {
            nodes: g.nodes.len(),
            edges: g.edges.len(),
            vertical: g.count_orientation(Orientation::Vertical),
            horizontal_x: g.count_orientation(Orientation::HorizontalX),
            horizontal_y: g.count_orientation(Orientation::HorizontalY),
            diagonal: g.count_orientation(Orientation::Diagonal),
            warnings: s.warnings.len(),
            clusters: s.clusters.len(),
            mixed_clusters: s.mixed_clusters,
            short_clusters: s.short_clusters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inspection {
    pub reference: PointCloud,
    pub current: PointCloud,
    pub reference_preprocess: Option<PreprocessSummary>,
    pub current_preprocess: Option<PreprocessSummary>,
    pub registration: Registration,
    pub reference_structure: StructureResult,
    pub current_structure: StructureResult,
    pub deviation: Deviation,
    pub diff: GraphDiff,
}

/// The full comparison. With `preprocessed` the clouds are used as given.
pub fn inspect(
    reference: &PointCloud,
    current: &PointCloud,
    config: &PipelineConfig,
    preprocessed: bool,
) -> Result<Inspection, PipelineError> {
    let (reference, reference_preprocess, current, current_preprocess) = if preprocessed {
        (reference.clone(), None, current.clone(), None)
    } else {
        let (r, rs) = preprocess(reference, config)?;
        let (c, cs) = preprocess(current, config)?;
        (r, Some(rs), c, Some(cs))
    };
    log::info!("registering {} points onto {}", current.len(), reference.len());
    let registration = register(&reference, &current, config)?;
    log::info!("extracting structure");
    let reference_structure = graph(&reference, config)?;
    let current_structure = graph(&registration.aligned, config)?;
    let deviation = deviate(&reference, &registration.aligned, config, Some(&reference_structure.graph))?;
    let diff = compare_graphs(&reference_structure.graph, &current_structure.graph, &config.diff).stage(Stage::Diff)?;
    Ok(Inspection {
        reference,
        current,
        reference_preprocess,
        current_preprocess,
        registration,
        reference_structure,
        current_structure,
        deviation,
        diff,
    })
}

/// The alert rule: any missing or deviated edge, or too many exceeding
/// points. Returns the reasons; the alert is raised iff there are any.
pub fn alert_reasons(diff: &GraphDiff, exceeding_fraction: f64, alarm_level: f64) -> Vec<String> {
    let mut reasons = Vec::new();
    if diff.summary.missing_edges > 0 {
        reasons.push(format!("{} missing edge(s)", diff.summary.missing_edges));
    }
    if diff.summary.deviated_edges > 0 {
        reasons.push(format!("{} deviated edge(s)", diff.summary.deviated_edges));
    }
    if exceeding_fraction > alarm_level {
        reasons.push(format!(
            "exceeding fraction {exceeding_fraction:.4} above alarm level {alarm_level}"
        ));
    }
    reasons
}
