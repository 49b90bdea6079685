//! Element extraction: per-point shape classes, brace clusters, brace
//! segments, joints and the joint/brace graph.

pub mod brace;
pub mod clustering;
pub mod features;
pub mod graph;
pub mod joints;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use brace::{classify_orientation, extract_brace, farthest_pair, BraceSegment, Orientation, OrientationTolerances};
pub use clustering::{dbscan, dbscan_subset, detect_mixed_cluster, hybrid_cluster, Cluster, Clustering};
pub use features::{classify_point, classify_points, shape_features, ShapeClass, ShapeFeatures};
pub use graph::{build_graph, split_at_joints, GraphEdge, GraphNode, GraphWarning, ScaffoldGraph};
pub use joints::{form_joints, form_joints_refined, Joint, JointFormation, JointParams};

use crate::index::SpatialIndex;
use crate::{Error, PointCloud, Result, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureParams {
    pub feature_radius: f64,
    pub min_neighbors: usize,
    /// Linear points below this linearity are left out of brace clustering;
    /// they sit where members meet.
    pub min_linearity: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub mixing_angle_deg: f64,
    pub hybrid_angle_deg: f64,
    /// Clusters whose farthest pair is shorter than this are not braces.
    pub min_brace_length: f64,
    /// Braces passing within this distance of a joint are cut there; 0
    /// disables cutting.
    pub split_offset: f64,
    pub joints: JointParams,
    pub orientation: OrientationTolerances,
}

impl Default for StructureParams {
    fn default() -> Self {
        StructureParams {
            feature_radius: 0.10,
            min_neighbors: 8,
            min_linearity: 0.8,
            dbscan_eps: 0.06,
            dbscan_min_pts: 6,
            mixing_angle_deg: 25.0,
            hybrid_angle_deg: 30.0,
            min_brace_length: 0.25,
            split_offset: 0.10,
            joints: JointParams::default(),
            orientation: OrientationTolerances::default(),
        }
    }
}

impl StructureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.feature_radius > 0.0) {
            return Err(Error::param("feature_radius", "must be positive"));
        }
        if self.min_neighbors < 3 {
            return Err(Error::param("min_neighbors", "must be at least 3"));
        }
        if !(0.0..=1.0).contains(&self.min_linearity) {
            return Err(Error::param("min_linearity", "must lie in [0, 1]"));
        }
        if !(self.dbscan_eps > 0.0) {
            return Err(Error::param("dbscan_eps", "must be positive"));
        }
        if self.dbscan_min_pts == 0 {
            return Err(Error::param("dbscan_min_pts", "must be at least 1"));
        }
        if !(self.mixing_angle_deg > 0.0 && self.mixing_angle_deg < 90.0) {
            return Err(Error::param("mixing_angle_deg", "must lie in (0, 90)"));
        }
        if !(self.hybrid_angle_deg > 0.0 && self.hybrid_angle_deg < 90.0) {
            return Err(Error::param("hybrid_angle_deg", "must lie in (0, 90)"));
        }
        if !(self.min_brace_length >= 0.0) {
            return Err(Error::param("min_brace_length", "must be non-negative"));
        }
        if !(self.split_offset >= 0.0) {
            return Err(Error::param("split_offset", "must be non-negative"));
        }
        self.joints.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementLabel {
    Brace,
    Joint,
    Planar,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElementPalette {
    pub brace: Rgb,
    pub joint: Rgb,
    pub planar: Rgb,
    pub other: Rgb,
}

impl Default for ElementPalette {
    fn default() -> Self {
        ElementPalette {
            brace: [0, 255, 0],
            joint: [255, 0, 0],
            planar: [0, 0, 255],
            other: [128, 128, 128],
        }
    }
}

impl ElementLabel {
    pub fn color(self, palette: &ElementPalette) -> Rgb {
        match self {
            ElementLabel::Brace => palette.brace,
            ElementLabel::Joint => palette.joint,
            ElementLabel::Planar => palette.planar,
            ElementLabel::Other => palette.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureResult {
    pub classes: Vec<ShapeClass>,
    /// Spatial clusters of the linear points, before refinement.
    pub initial_clusters: Vec<Cluster>,
    pub mixed_clusters: usize,
    /// Clusters after hybrid refinement; brace `i` comes from cluster
    /// `braces[i].source_cluster`.
    pub clusters: Vec<Cluster>,
    pub braces: Vec<BraceSegment>,
    pub short_clusters: usize,
    pub joints: JointFormation,
    pub graph: ScaffoldGraph,
    pub warnings: Vec<GraphWarning>,
    pub elements: Vec<ElementLabel>,
}

/// The whole extraction chain on an already preprocessed scaffold cloud.
pub fn extract_structure(cloud: &PointCloud, params: &StructureParams) -> Result<StructureResult> {
    params.validate()?;
    let index = SpatialIndex::build(cloud)?;
    let features = shape_features(cloud, &index, params.feature_radius, params.min_neighbors)?;
    let classes = classify_points(&features);
    let linear: Vec<usize> = (0..cloud.len())
        .filter(|&i| classes[i] == ShapeClass::Linear && features[i].linearity >= params.min_linearity)
        .collect();
    let initial_clusters = dbscan_subset(cloud, &linear, params.dbscan_eps, params.dbscan_min_pts)?;

    let mut mixed_clusters = 0;
    let mut clusters = Vec::new();
    for cluster in &initial_clusters {
        let parts = if detect_mixed_cluster(cluster, &features, params.mixing_angle_deg) {
            mixed_clusters += 1;
            hybrid_cluster(
                cluster,
                cloud,
                &features,
                params.hybrid_angle_deg,
                params.dbscan_eps,
                params.dbscan_min_pts,
            )?
        } else {
            vec![cluster.clone()]
        };
        for part in parts {
            clusters.push(Cluster {
                label: clusters.len(),
                point_indices: part.point_indices,
            });
        }
    }

    let mut braces = Vec::new();
    let mut short_clusters = 0;
    for cluster in &clusters {
        match extract_brace(cloud, cluster, &params.orientation) {
            Ok(b) if b.length >= params.min_brace_length => braces.push(b),
            Ok(_) | Err(Error::Degenerate(_)) | Err(Error::TooFewPoints { .. }) => short_clusters += 1,
            Err(e) => return Err(e),
        }
    }

    let mut in_brace = vec![false; cloud.len()];
    for b in &braces {
        for &i in &clusters[b.source_cluster].point_indices {
            in_brace[i] = true;
        }
    }
    let joint_region: Vec<usize> = (0..cloud.len()).filter(|&i| !in_brace[i]).collect();
    let joints = form_joints_refined(&braces, cloud, &index, &joint_region, &params.joints)?;
    let (edge_braces, edge_assignment, mut warnings) = split_at_joints(
        &braces,
        &joints.joints,
        &joints.assignment,
        params.split_offset,
        &params.orientation,
    );
    let (graph, graph_warnings) = build_graph(&edge_braces, &joints.joints, &edge_assignment);
    warnings.extend(graph_warnings);

    let mut elements: Vec<ElementLabel> = classes
        .iter()
        .map(|c| match c {
            ShapeClass::Planar => ElementLabel::Planar,
            _ => ElementLabel::Other,
        })
        .collect();
    for (i, &b) in in_brace.iter().enumerate() {
        if b {
            elements[i] = ElementLabel::Brace;
        }
    }
    let mut buf = Vec::new();
    for node in &graph.nodes {
        index.radius_neighbors_into(&node.position(), params.joints.joint_radius, &mut buf);
        for &i in &buf {
            elements[i] = ElementLabel::Joint;
        }
    }

    Ok(StructureResult {
        classes,
        initial_clusters,
        mixed_clusters,
        clusters,
        braces,
        short_clusters,
        joints,
        graph,
        warnings,
        elements,
    })
}

/// The cloud colored by element label.
pub fn colorize_elements(cloud: &PointCloud, elements: &[ElementLabel], palette: &ElementPalette) -> Result<PointCloud> {
    if elements.len() != cloud.len() {
        return Err(Error::LabelLengthMismatch {
            points: cloud.len(),
            labels: elements.len(),
        });
    }
    cloud.clone().with_colors(elements.iter().map(|e| e.color(palette)).collect())
}
