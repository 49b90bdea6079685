//! Synthetic scaffold scenes with exact ground truth: a rectangular tube
//! lattice sampled as noisy cylinder surfaces, optional ground, wall, safety
//! sheet and clutter, per-point source labels, the true joint/brace graph,
//! and injectable missing or displaced members.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::structure::{GraphEdge, GraphNode, Orientation, ScaffoldGraph};
use crate::{Error, Point3, PointCloud, Result};

/// Lattice parameters and scene content.
///
/// The lattice occupies `x ∈ [0, bays_x·bay_width]`, `y ∈ [0,
/// bays_y·bay_depth]`, with level `k` at `z = base_height + k·lift_height`.
/// The wall is the plane `y = −wall_standoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaffoldSpec {
    pub bays_x: usize,
    pub bays_y: usize,
    pub lifts: usize,
    pub bay_width: f64,
    pub bay_depth: f64,
    pub lift_height: f64,
    /// Height of the lowest ledger level above the ground.
    pub base_height: f64,
    pub wall_standoff: f64,
    pub tube_radius: f64,
    /// Tube samples per meter of member length.
    pub points_per_meter: f64,
    pub noise_sigma: f64,
    pub include_ground: bool,
    pub include_wall: bool,
    /// A vertical sheet in front of the first bay of the first lift.
    pub include_sheet: bool,
    pub clutter_points: usize,
    /// Samples per square meter on ground, wall and sheet.
    pub surface_density: f64,
    /// Member points within this distance of a node are tagged with it.
    pub joint_zone: f64,
    /// When set, only the tube half facing this position is sampled.
    pub scanner: Option<Point3>,
    pub seed: u64,
}

impl Default for ScaffoldSpec {
    fn default() -> Self {
        ScaffoldSpec {
            bays_x: 3,
            bays_y: 3,
            lifts: 3,
            bay_width: 2.0,
            bay_depth: 1.0,
            lift_height: 2.0,
            base_height: 0.2,
            wall_standoff: 0.3,
            tube_radius: 0.024,
            points_per_meter: 400.0,
            noise_sigma: 0.002,
            include_ground: true,
            include_wall: true,
            include_sheet: false,
            clutter_points: 0,
            surface_density: 1000.0,
            joint_zone: 0.1,
            scanner: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberAxis {
    /// Upright from node `(i, j, k)` to `(i, j, k+1)`.
    Z,
    /// Ledger from `(i, j, k)` to `(i+1, j, k)`.
    X,
    /// Ledger from `(i, j, k)` to `(i, j+1, k)`.
    Y,
}

/// A lattice member named by its axis and lower node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRef {
    pub axis: MemberAxis,
    pub at: [usize; 3],
}

impl ScaffoldSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be non-negative, got {v}")))
            }
        };
        for (name, v) in [("bays_x", self.bays_x), ("bays_y", self.bays_y), ("lifts", self.lifts)] {
            if v == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        positive("bay_width", self.bay_width)?;
        positive("bay_depth", self.bay_depth)?;
        positive("lift_height", self.lift_height)?;
        positive("tube_radius", self.tube_radius)?;
        positive("points_per_meter", self.points_per_meter)?;
        non_negative("base_height", self.base_height)?;
        non_negative("wall_standoff", self.wall_standoff)?;
        non_negative("noise_sigma", self.noise_sigma)?;
        non_negative("surface_density", self.surface_density)?;
        non_negative("joint_zone", self.joint_zone)?;
        let shortest = self.bay_width.min(self.bay_depth).min(self.lift_height);
        if 2.0 * self.tube_radius >= shortest {
            return Err(Error::param("tube_radius", "tubes would overlap along a member"));
        }
        if let Some(s) = self.scanner {
            if !s.is_finite() {
                return Err(Error::param("scanner", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.bays_x as f64 * self.bay_width,
            self.bays_y as f64 * self.bay_depth,
            self.base_height + self.lifts as f64 * self.lift_height,
        ]
    }

    /// A scanner position `distance` in front of the face opposite the wall,
    /// centred on it at 1.5 m height.
    pub fn front_scanner(&self, distance: f64) -> Point3 {
        let [x, y, _] = self.extent();
        Point3::new(x / 2.0, y + distance, 1.5)
    }

    pub fn node_count(&self) -> usize {
        (self.bays_x + 1) * (self.bays_y + 1) * (self.lifts + 1)
    }

    pub fn edge_count(&self) -> usize {
        let (nx, ny, nl) = (self.bays_x, self.bays_y, self.lifts);
        nl * (nx + 1) * (ny + 1) + (nl + 1) * ((ny + 1) * nx + ny * (nx + 1))
    }

    pub fn node_id(&self, [i, j, k]: [usize; 3]) -> Option<usize> {
        if i > self.bays_x || j > self.bays_y || k > self.lifts {
            return None;
        }
        let (cx, cy) = (self.bays_x + 1, self.bays_y + 1);
        Some(k * cx * cy + j * cx + i)
    }

    pub fn node_coords(&self, id: usize) -> Option<[usize; 3]> {
        if id >= self.node_count() {
            return None;
        }
        let (cx, cy) = (self.bays_x + 1, self.bays_y + 1);
        Some([id % cx, (id / cx) % cy, id / (cx * cy)])
    }

    pub fn node_position(&self, [i, j, k]: [usize; 3]) -> Point3 {
        Point3::new(
            i as f64 * self.bay_width,
            j as f64 * self.bay_depth,
            self.base_height + k as f64 * self.lift_height,
        )
    }

    /// Edge ids: uprights, then x ledgers, then y ledgers, each ordered by
    /// level, row, column.
    pub fn edge_id(&self, m: &MemberRef) -> Option<usize> {
        let (nx, ny, nl) = (self.bays_x, self.bays_y, self.lifts);
        let [i, j, k] = m.at;
        let verticals = nl * (nx + 1) * (ny + 1);
        let x_ledgers = (nl + 1) * (ny + 1) * nx;
        match m.axis {
            MemberAxis::Z if i <= nx && j <= ny && k < nl => Some(k * (nx + 1) * (ny + 1) + j * (nx + 1) + i),
            MemberAxis::X if i < nx && j <= ny && k <= nl => Some(verticals + k * (ny + 1) * nx + j * nx + i),
            MemberAxis::Y if i <= nx && j < ny && k <= nl => {
                Some(verticals + x_ledgers + k * ny * (nx + 1) + j * (nx + 1) + i)
            }
            _ => None,
        }
    }

    pub fn member(&self, edge_id: usize) -> Option<MemberRef> {
        let (nx, ny, nl) = (self.bays_x, self.bays_y, self.lifts);
        let verticals = nl * (nx + 1) * (ny + 1);
        let x_ledgers = (nl + 1) * (ny + 1) * nx;
        let (axis, local, w, h) = if edge_id < verticals {
            (MemberAxis::Z, edge_id, nx + 1, ny + 1)
        } else if edge_id < verticals + x_ledgers {
            (MemberAxis::X, edge_id - verticals, nx, ny + 1)
        } else if edge_id < self.edge_count() {
            (MemberAxis::Y, edge_id - verticals - x_ledgers, nx + 1, ny)
        } else {
            return None;
        };
        Some(MemberRef {
            axis,
            at: [local % w, (local / w) % h, local / (w * h)],
        })
    }

    /// The two node coordinates joined by a member.
    pub fn member_nodes(&self, m: &MemberRef) -> Option<[[usize; 3]; 2]> {
        self.edge_id(m)?;
        let [i, j, k] = m.at;
        let end = match m.axis {
            MemberAxis::Z => [i, j, k + 1],
            MemberAxis::X => [i + 1, j, k],
            MemberAxis::Y => [i, j + 1, k],
        };
        Some([m.at, end])
    }

    fn members(&self) -> impl Iterator<Item = MemberRef> + '_ {
        (0..self.edge_count()).map(|e| self.member(e).expect("edge id in range"))
    }

    /// The exact lattice graph.
    pub fn graph(&self) -> ScaffoldGraph {
        let nodes = (0..self.node_count())
            .map(|id| GraphNode::new(id, self.node_position(self.node_coords(id).expect("in range"))))
            .collect();
        let edges = self
            .members()
            .map(|m| {
                let [a, b] = self.member_nodes(&m).expect("valid member");
                GraphEdge {
                    id: self.edge_id(&m).expect("valid member"),
                    a: self.node_id(a).expect("valid node"),
                    b: self.node_id(b).expect("valid node"),
                    orientation: match m.axis {
                        MemberAxis::Z => Orientation::Vertical,
                        MemberAxis::X => Orientation::HorizontalX,
                        MemberAxis::Y => Orientation::HorizontalY,
                    },
                    length: match m.axis {
                        MemberAxis::Z => self.lift_height,
                        MemberAxis::X => self.bay_width,
                        MemberAxis::Y => self.bay_depth,
                    },
                }
            })
            .collect();
        ScaffoldGraph { nodes, edges }
    }
}

/// Where a synthetic point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PointLabel {
    /// A tube surface; `joint` is the node whose zone the point lies in.
    Member { edge: usize, joint: Option<usize> },
    Ground,
    Wall,
    Sheet,
    Clutter,
}

impl PointLabel {
    pub fn edge(&self) -> Option<usize> {
        match self {
            PointLabel::Member { edge, .. } => Some(*edge),
            _ => None,
        }
    }

    pub fn is_member(&self) -> bool {
        matches!(self, PointLabel::Member { .. })
    }

    pub fn is_plane(&self) -> bool {
        matches!(self, PointLabel::Ground | PointLabel::Wall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub spec: ScaffoldSpec,
    pub cloud: PointCloud,
    pub labels: Vec<PointLabel>,
    pub graph: ScaffoldGraph,
}

impl SyntheticScene {
    pub fn indices_where(&self, pred: impl Fn(&PointLabel) -> bool) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| pred(&self.labels[i])).collect()
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    points: Vec<Point3>,
    labels: Vec<PointLabel>,
}

impl Sampler {
    fn push(&mut self, p: Vector3<f64>, label: PointLabel) {
        let p = match self.noise {
            Some(n) => p + Vector3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => p,
        };
        self.points.push(Point3::from_vector(&p));
        self.labels.push(label);
    }

    fn count(&self, area: f64, density: f64) -> usize {
        math::round(area * density).max(0.0) as usize
    }

    // uniform over the rectangle origin + s·u + t·v, s, t ∈ [0, 1]
    fn rectangle(&mut self, origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, density: f64, label: PointLabel) {
        let n = self.count(u.cross(&v).norm(), density);
        for _ in 0..n {
            let (s, t) = (self.rng.random::<f64>(), self.rng.random::<f64>());
            self.push(origin + u * s + v * t, label);
        }
    }
}

fn perpendicular_basis(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if u.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = helper.cross(u).normalize();
    let e2 = u.cross(&e1);
    (e1, e2)
}

/// Renders the scene. The same spec always yields the same bits.
pub fn generate_scaffold(spec: &ScaffoldSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::param("noise_sigma", "invalid"))?)
    } else {
        None
    };
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        noise,
        points: Vec::new(),
        labels: Vec::new(),
    };
    let graph = spec.graph();
    for edge in &graph.edges {
        let a = graph.nodes[edge.a].position().to_vector();
        let b = graph.nodes[edge.b].position().to_vector();
        let length = (b - a).norm();
        let u = (b - a) / length;
        let (e1, e2) = perpendicular_basis(&u);
        let n = s.count(length, spec.points_per_meter);
        for _ in 0..n {
            let along = s.rng.random_range(0.0..length);
            let axis_point = a + u * along;
            let theta = match spec.scanner {
                Some(scanner) => {
                    let to = scanner.to_vector() - axis_point;
                    let perp = to - u * to.dot(&u);
                    let centre = if perp.norm() > 1e-12 {
                        math::atan2(perp.dot(&e2), perp.dot(&e1))
                    } else {
                        0.0
                    };
                    centre + s.rng.random_range(-core::f64::consts::FRAC_PI_2..core::f64::consts::FRAC_PI_2)
                }
                None => s.rng.random_range(0.0..core::f64::consts::TAU),
            };
            let radial = e1 * math::cos(theta) + e2 * math::sin(theta);
            let joint = if along <= spec.joint_zone {
                Some(edge.a)
            } else if along >= length - spec.joint_zone {
                Some(edge.b)
            } else {
                None
            };
            s.push(axis_point + radial * spec.tube_radius, PointLabel::Member { edge: edge.id, joint });
        }
    }
    let [x, y, z] = spec.extent();
    if spec.include_sheet {
        let front = y + 0.15;
        s.rectangle(
            Vector3::new(0.0, front, spec.base_height),
            Vector3::new(spec.bay_width, 0.0, 0.0),
            Vector3::new(0.0, 0.0, spec.lift_height),
            spec.surface_density,
            PointLabel::Sheet,
        );
    }
    if spec.include_ground {
        s.rectangle(
            Vector3::new(-1.0, -spec.wall_standoff, 0.0),
            Vector3::new(x + 2.0, 0.0, 0.0),
            Vector3::new(0.0, y + 2.0 + spec.wall_standoff, 0.0),
            spec.surface_density,
            PointLabel::Ground,
        );
    }
    if spec.include_wall {
        s.rectangle(
            Vector3::new(-1.0, -spec.wall_standoff, 0.0),
            Vector3::new(x + 2.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, z + 1.0),
            spec.surface_density,
            PointLabel::Wall,
        );
    }
    for _ in 0..spec.clutter_points {
        let p = Vector3::new(
            s.rng.random_range(-1.0..x + 1.0),
            s.rng.random_range(-spec.wall_standoff - 2.0..y + 2.0),
            s.rng.random_range(0.0..z + 1.0),
        );
        s.push(p, PointLabel::Clutter);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        cloud: PointCloud::new(s.points, None)?,
        labels: s.labels,
        graph,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Defect {
    RemoveBrace { target: MemberRef },
    ShiftBrace { target: MemberRef, displacement: [f64; 3] },
    ShiftJoint { target: [usize; 3], displacement: [f64; 3] },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub defects: Vec<Defect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectRecord {
    RemovedBrace {
        edge: usize,
        nodes: [usize; 2],
        removed_points: usize,
        /// Nodes dropped from the graph because no edge touches them anymore.
        removed_nodes: Vec<usize>,
    },
    /// The graph keeps its nodes; the true brace now runs between the
    /// shifted endpoints.
    ShiftedBrace {
        edge: usize,
        displacement: [f64; 3],
        moved_points: usize,
        endpoints: [Point3; 2],
    },
    ShiftedJoint {
        node: usize,
        displacement: [f64; 3],
        moved_points: usize,
        edges: Vec<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectLog {
    pub records: Vec<DefectRecord>,
}

impl DefectLog {
    pub fn removed_edges(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter_map(|r| match r {
                DefectRecord::RemovedBrace { edge, .. } => Some(*edge),
                _ => None,
            })
            .collect()
    }
}

fn unknown(what: &str, detail: impl core::fmt::Debug) -> Error {
    Error::UnknownTarget(format!("{what} {detail:?}"))
}

/// Applies the defects in order.
///
/// Removing a brace deletes its points and its edge (and any node left
/// without edges). Shifting a brace translates its points. Shifting a joint
/// moves the node and shears every incident member: a point at distance `s`
/// along a member of length `L` from the moved node moves by
/// `displacement·(1 − s/L)`, so the far end stays put.
pub fn apply_defects(scene: &SyntheticScene, defects: &DefectSpec) -> Result<(SyntheticScene, DefectLog)> {
    let spec = &scene.spec;
    let (mut points, colors) = scene.cloud.clone().into_parts();
    let mut labels = scene.labels.clone();
    let mut graph = scene.graph.clone();
    let mut log = DefectLog::default();
    for defect in &defects.defects {
        match defect {
            Defect::RemoveBrace { target } => {
                let id = spec.edge_id(target).ok_or_else(|| unknown("member", target))?;
                let pos = graph
                    .edges
                    .iter()
                    .position(|e| e.id == id)
                    .ok_or_else(|| unknown("already removed member", target))?;
                let edge = graph.edges.remove(pos);
                let keep: Vec<bool> = labels.iter().map(|l| l.edge() != Some(id)).collect();
                let before = points.len();
                let mut k = 0;
                points.retain(|_| {
                    k += 1;
                    keep[k - 1]
                });
                labels.retain(|l| l.edge() != Some(id));
                let used: BTreeSet<usize> = graph.edges.iter().flat_map(|e| [e.a, e.b]).collect();
                let removed_nodes: Vec<usize> = [edge.a, edge.b].into_iter().filter(|n| !used.contains(n)).collect();
                graph.nodes.retain(|n| !removed_nodes.contains(&n.id));
                log.records.push(DefectRecord::RemovedBrace {
                    edge: id,
                    nodes: [edge.a, edge.b],
                    removed_points: before - points.len(),
                    removed_nodes,
                });
            }
            Defect::ShiftBrace { target, displacement } => {
                let id = spec.edge_id(target).ok_or_else(|| unknown("member", target))?;
                let edge = *graph
                    .edges
                    .iter()
                    .find(|e| e.id == id)
                    .ok_or_else(|| unknown("removed member", target))?;
                let d = Vector3::from(*displacement);
                let mut moved = 0;
                for (p, l) in points.iter_mut().zip(&labels) {
                    if l.edge() == Some(id) {
                        *p = *p + d;
                        moved += 1;
                    }
                }
                let node = |n: usize| graph.node(n).expect("edge nodes exist").position() + d;
                log.records.push(DefectRecord::ShiftedBrace {
                    edge: id,
                    displacement: *displacement,
                    moved_points: moved,
                    endpoints: [node(edge.a), node(edge.b)],
                });
            }
            Defect::ShiftJoint { target, displacement } => {
                let id = spec.node_id(*target).ok_or_else(|| unknown("node", target))?;
                let origin = graph.node(id).ok_or_else(|| unknown("removed node", target))?.position();
                let d = Vector3::from(*displacement);
                let incident: Vec<GraphEdge> = graph.edges.iter().filter(|e| e.a == id || e.b == id).copied().collect();
                let mut moved = 0;
                for edge in &incident {
                    let other = graph.node(if edge.a == id { edge.b } else { edge.a }).expect("edge nodes exist").position();
                    let axis = other - origin;
                    let length = axis.norm();
                    let u = axis / length;
                    for (p, l) in points.iter_mut().zip(&labels) {
                        if l.edge() == Some(edge.id) {
                            let s = ((*p - origin).dot(&u) / length).clamp(0.0, 1.0);
                            *p = *p + d * (1.0 - s);
                            moved += 1;
                        }
                    }
                }
                let node = graph.nodes.iter_mut().find(|n| n.id == id).expect("checked above");
                *node = GraphNode::new(id, origin + d);
                for e in graph.edges.iter_mut().filter(|e| e.a == id || e.b == id) {
                    let (a, b) = (e.a, e.b);
                    e.length = graph_position(&graph.nodes, a).distance(&graph_position(&graph.nodes, b));
                }
                log.records.push(DefectRecord::ShiftedJoint {
                    node: id,
                    displacement: *displacement,
                    moved_points: moved,
                    edges: incident.iter().map(|e| e.id).collect(),
                });
            }
        }
    }
    Ok((
        SyntheticScene {
            spec: spec.clone(),
            cloud: PointCloud::new(points, colors)?,
            labels,
            graph,
        },
        log,
    ))
}

fn graph_position(nodes: &[GraphNode], id: usize) -> Point3 {
    nodes.iter().find(|n| n.id == id).expect("node exists").position()
}
