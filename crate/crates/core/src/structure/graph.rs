use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::brace::{segment_between, BraceSegment, Orientation, OrientationTolerances};
use super::joints::Joint;
use crate::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GraphNode {
    pub fn new(id: usize, p: Point3) -> Self {
        GraphNode { id, x: p.x, y: p.y, z: p.z }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub orientation: Orientation,
    pub length: f64,
}

impl GraphEdge {
    /// Endpoints as `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

/// Joints as nodes, braces as edges. Node ids need not be contiguous.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl ScaffoldGraph {
    pub fn node(&self, id: usize) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<&GraphEdge> {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.edges.iter().find(|e| e.key() == key)
    }

    pub fn degree(&self, id: usize) -> usize {
        self.edges.iter().filter(|e| e.a == id || e.b == id).count()
    }

    pub fn count_orientation(&self, orientation: Orientation) -> usize {
        self.edges.iter().filter(|e| e.orientation == orientation).count()
    }

    /// Median length of vertical edges.
    pub fn median_vertical_length(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .edges
            .iter()
            .filter(|e| e.orientation == Orientation::Vertical)
            .map(|e| e.length)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    /// Checks the structural invariants, returning the first violation.
    pub fn check(&self, merge_radius: Option<f64>) -> core::result::Result<(), &'static str> {
        let ids: BTreeSet<usize> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return Err("duplicate node id");
        }
        for e in &self.edges {
            if !ids.contains(&e.a) || !ids.contains(&e.b) {
                return Err("edge references a missing node");
            }
            if e.a == e.b {
                return Err("self-loop edge");
            }
        }
        if let Some(r) = merge_radius {
            for (i, a) in self.nodes.iter().enumerate() {
                for b in &self.nodes[i + 1..] {
                    if a.position().distance(&b.position()) <= r {
                        return Err("nodes closer than the merge radius");
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    /// Both endpoints of the brace fell into one joint.
    SelfLoop { brace: usize, joint: usize },
    /// A brace repeats an existing joint pair.
    DuplicateEdge { brace: usize, a: usize, b: usize },
    /// A brace ran through a joint and was cut there.
    SplitAtJoint { brace: usize, joint: usize },
}

/// Cuts braces that run through a joint.
///
/// A joint other than the brace's own two is on the brace when it lies
/// within `max_offset` of the segment between the brace's joint positions
/// and more than `max_offset` from both ends along it. Each such brace is
/// replaced by pieces between consecutive joints, in order along the brace;
/// pieces keep the source cluster. Returns the new braces and assignment.
pub fn split_at_joints(
    braces: &[BraceSegment],
    joints: &[Joint],
    assignment: &[[usize; 2]],
    max_offset: f64,
    tolerances: &OrientationTolerances,
) -> (Vec<BraceSegment>, Vec<[usize; 2]>, Vec<GraphWarning>) {
    let position = |id: usize| joints.iter().find(|j| j.id == id).expect("assigned joint exists").position;
    let mut out_braces = Vec::new();
    let mut out_assignment = Vec::new();
    let mut warnings = Vec::new();
    for (k, (brace, &[a, b])) in braces.iter().zip(assignment).enumerate() {
        let (pa, pb) = (position(a), position(b));
        let axis = pb - pa;
        let length = axis.norm();
        let mut cuts: Vec<(f64, usize)> = Vec::new();
        if a != b && max_offset > 0.0 && length > 2.0 * max_offset {
            let u = axis / length;
            for j in joints.iter().filter(|j| j.id != a && j.id != b) {
                let v = j.position - pa;
                let t = v.dot(&u);
                if t > max_offset && t < length - max_offset && (v - u * t).norm() <= max_offset {
                    cuts.push((t, j.id));
                }
            }
        }
        if cuts.is_empty() {
            out_braces.push(brace.clone());
            out_assignment.push([a, b]);
            continue;
        }
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut chain = alloc::vec![a];
        for &(_, j) in &cuts {
            warnings.push(GraphWarning::SplitAtJoint { brace: k, joint: j });
            chain.push(j);
        }
        chain.push(b);
        for w in chain.windows(2) {
            match segment_between(position(w[0]), position(w[1]), brace.source_cluster, tolerances) {
                Ok(piece) => {
                    out_braces.push(piece);
                    out_assignment.push([w[0], w[1]]);
                }
                Err(_) => continue,
            }
        }
    }
    (out_braces, out_assignment, warnings)
}

/// Assembles the graph: one edge per brace between its assigned joints,
/// except self-loops and repeated joint pairs, which are dropped with a
/// warning. Joints left without edges are not included. The edge length is
/// the distance between the two joint positions.
pub fn build_graph(braces: &[BraceSegment], joints: &[Joint], assignment: &[[usize; 2]]) -> (ScaffoldGraph, Vec<GraphWarning>) {
    assert_eq!(braces.len(), assignment.len(), "one assignment per brace");
    let position = |id: usize| joints.iter().find(|j| j.id == id).expect("assigned joint exists").position;
    let mut warnings = Vec::new();
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, (brace, &[a, b])) in braces.iter().zip(assignment).enumerate() {
        if a == b {
            warnings.push(GraphWarning::SelfLoop { brace: k, joint: a });
            continue;
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            warnings.push(GraphWarning::DuplicateEdge { brace: k, a, b });
            continue;
        }
        edges.push(GraphEdge {
            id: edges.len(),
            a,
            b,
            orientation: brace.orientation,
            length: position(a).distance(&position(b)),
        });
    }
    let used: BTreeSet<usize> = edges.iter().flat_map(|e| [e.a, e.b]).collect();
    let nodes = joints
        .iter()
        .filter(|j| used.contains(&j.id))
        .map(|j| GraphNode::new(j.id, j.position))
        .collect();
    (ScaffoldGraph { nodes, edges }, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn joint(id: usize, x: f64) -> Joint {
        Joint {
            id,
            position: Point3::new(x, 0.0, 0.0),
        }
    }

    fn brace() -> BraceSegment {
        segment_between(Point3::ORIGIN, Point3::new(2.0, 0.0, 0.0), 0, &OrientationTolerances::default()).unwrap()
    }

    #[test]
    fn minimal_graph() {
        let (g, w) = build_graph(&[brace()], &[joint(0, 0.0), joint(1, 2.0)], &[[0, 1]]);
        assert!(w.is_empty());
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].length, 2.0);
        assert_eq!(g.edges[0].orientation, Orientation::HorizontalX);
        assert!(g.check(Some(0.1)).is_ok());
    }

    #[test]
    fn self_loop_is_dropped_with_warning() {
        let (g, w) = build_graph(&[brace()], &[joint(0, 0.0)], &[[0, 0]]);
        assert!(g.edges.is_empty());
        assert!(g.nodes.is_empty());
        assert_eq!(w, vec![GraphWarning::SelfLoop { brace: 0, joint: 0 }]);
    }

    #[test]
    fn duplicate_pair_is_dropped() {
        let (g, w) = build_graph(&[brace(), brace()], &[joint(0, 0.0), joint(1, 2.0)], &[[0, 1], [1, 0]]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(w, vec![GraphWarning::DuplicateEdge { brace: 1, a: 1, b: 0 }]);
        assert_eq!(g.degree(0), 1);
    }

    #[test]
    fn brace_through_a_joint_is_split() {
        let joints = [joint(0, 0.0), joint(1, 2.0), joint(2, 1.02)];
        let off_axis = Joint {
            id: 3,
            position: Point3::new(1.5, 0.5, 0.0),
        };
        let mut all = joints.to_vec();
        all.push(off_axis);
        let (b, a, w) = split_at_joints(&[brace()], &all, &[[0, 1]], 0.1, &OrientationTolerances::default());
        assert_eq!(a, vec![[0, 2], [2, 1]]);
        assert_eq!(w, vec![GraphWarning::SplitAtJoint { brace: 0, joint: 2 }]);
        assert!((b[0].length - 1.02).abs() < 1e-12);
        let (g, _) = build_graph(&b, &all, &a);
        assert_eq!(g.edges.len(), 2);
        // a joint near the end is the brace's own business
        let (_, a, _) = split_at_joints(&[brace()], &[joint(0, 0.0), joint(1, 2.0), joint(2, 1.95)], &[[0, 1]], 0.1, &OrientationTolerances::default());
        assert_eq!(a, vec![[0, 1]]);
    }

    #[test]
    fn check_reports_violations() {
        let mut g = ScaffoldGraph {
            nodes: vec![GraphNode::new(0, Point3::ORIGIN), GraphNode::new(1, Point3::new(0.05, 0.0, 0.0))],
            edges: vec![GraphEdge {
                id: 0,
                a: 0,
                b: 1,
                orientation: Orientation::HorizontalX,
                length: 0.05,
            }],
        };
        assert!(g.check(None).is_ok());
        assert!(g.check(Some(0.1)).is_err());
        g.edges[0].b = 7;
        assert!(g.check(None).is_err());
    }
}
