//! Comparison of a reference scaffold graph with a campaign graph in the
//! same frame: node correspondence by position, then missing, added and
//! deviated braces.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::index::SpatialIndex;
use crate::structure::{GraphEdge, ScaffoldGraph};
use crate::{Error, Point3, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffParams {
    pub node_tolerance: f64,
    pub deviation_tolerance: f64,
}

impl Default for DiffParams {
    fn default() -> Self {
        DiffParams {
            node_tolerance: 0.25,
            deviation_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    pub reference: usize,
    pub current: usize,
    pub displacement: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeCorrespondence {
    /// Sorted by reference id.
    pub matches: Vec<NodeMatch>,
    pub unmatched_reference: Vec<usize>,
    pub unmatched_current: Vec<usize>,
}

impl NodeCorrespondence {
    pub fn current_of(&self, reference: usize) -> Option<&NodeMatch> {
        self.matches
            .binary_search_by_key(&reference, |m| m.reference)
            .ok()
            .map(|k| &self.matches[k])
    }

    /// The same correspondence seen from the other graph.
    pub fn swapped(&self) -> NodeCorrespondence {
        let mut matches: Vec<NodeMatch> = self
            .matches
            .iter()
            .map(|m| NodeMatch {
                reference: m.current,
                current: m.reference,
                displacement: m.displacement,
            })
            .collect();
        matches.sort_by_key(|m| m.reference);
        NodeCorrespondence {
            matches,
            unmatched_reference: self.unmatched_current.clone(),
            unmatched_current: self.unmatched_reference.clone(),
        }
    }
}

fn positions(g: &ScaffoldGraph) -> Vec<Point3> {
    g.nodes.iter().map(|n| n.position()).collect()
}

/// Greedy one-to-one matching: candidate pairs within `node_tolerance` are
/// taken in order of (distance, reference id, current id), skipping pairs
/// whose nodes are already used.
pub fn match_nodes(reference: &ScaffoldGraph, current: &ScaffoldGraph, node_tolerance: f64) -> Result<NodeCorrespondence> {
    if !(node_tolerance >= 0.0) {
        return Err(Error::param("node_tolerance", "must be non-negative"));
    }
    let ref_pos = positions(reference);
    let cur_pos = positions(current);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    if !cur_pos.is_empty() {
        let index = SpatialIndex::from_points(&cur_pos)?;
        let mut buf = Vec::new();
        for (r, p) in ref_pos.iter().enumerate() {
            index.radius_neighbors_into(p, node_tolerance, &mut buf);
            for &c in &buf {
                pairs.push((p.distance(&cur_pos[c]), r, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(reference.nodes[a.1].id.cmp(&reference.nodes[b.1].id))
            .then(current.nodes[a.2].id.cmp(&current.nodes[b.2].id))
    });
    let mut ref_used = BTreeSet::new();
    let mut cur_used = BTreeSet::new();
    let mut matches = Vec::new();
    for (d, r, c) in pairs {
        let (rid, cid) = (reference.nodes[r].id, current.nodes[c].id);
        if ref_used.contains(&rid) || cur_used.contains(&cid) {
            continue;
        }
        ref_used.insert(rid);
        cur_used.insert(cid);
        matches.push(NodeMatch {
            reference: rid,
            current: cid,
            displacement: d,
        });
    }
    matches.sort_by_key(|m| m.reference);
    let unmatched = |g: &ScaffoldGraph, used: &BTreeSet<usize>| {
        let mut v: Vec<usize> = g.nodes.iter().map(|n| n.id).filter(|id| !used.contains(id)).collect();
        v.sort_unstable();
        v
    };
    Ok(NodeCorrespondence {
        matches,
        unmatched_reference: unmatched(reference, &ref_used),
        unmatched_current: unmatched(current, &cur_used),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePair {
    pub reference: GraphEdge,
    pub current: GraphEdge,
    /// Larger of the two endpoint displacements.
    pub max_displacement: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub reference_nodes: usize,
    pub current_nodes: usize,
    pub matched_nodes: usize,
    pub reference_edges: usize,
    pub current_edges: usize,
    pub matched_edges: usize,
    pub deviated_edges: usize,
    pub missing_edges: usize,
    pub added_edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDiff {
    pub node_matches: Vec<NodeMatch>,
    pub unmatched_reference_nodes: Vec<usize>,
    pub unmatched_current_nodes: Vec<usize>,
    /// Found within the deviation tolerance.
    pub matched_edges: Vec<EdgePair>,
    pub deviated_edges: Vec<EdgePair>,
    pub missing_edges: Vec<GraphEdge>,
    pub added_edges: Vec<GraphEdge>,
    pub deviation_tolerance: f64,
    pub summary: DiffSummary,
}

/// Classifies every reference edge as matched, deviated or missing and
/// collects the current edges no reference edge claimed.
///
/// A reference edge is found when both endpoints are matched and the current
/// graph joins their partners; each current edge serves one reference edge
/// at most. A found edge is deviated when either endpoint moved more than
/// `deviation_tolerance`.
pub fn diff_graphs(
    reference: &ScaffoldGraph,
    current: &ScaffoldGraph,
    correspondence: &NodeCorrespondence,
    deviation_tolerance: f64,
) -> Result<GraphDiff> {
    if !(deviation_tolerance >= 0.0) {
        return Err(Error::param("deviation_tolerance", "must be non-negative"));
    }
    let mut current_by_key: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, e) in current.edges.iter().enumerate() {
        current_by_key.entry(e.key()).or_default().push(k);
    }
    let mut consumed = alloc::vec![false; current.edges.len()];
    let mut diff = GraphDiff {
        node_matches: correspondence.matches.clone(),
        unmatched_reference_nodes: correspondence.unmatched_reference.clone(),
        unmatched_current_nodes: correspondence.unmatched_current.clone(),
        deviation_tolerance,
        ..GraphDiff::default()
    };
    for e in &reference.edges {
        let found = match (correspondence.current_of(e.a), correspondence.current_of(e.b)) {
            (Some(ma), Some(mb)) => {
                let key = if ma.current <= mb.current {
                    (ma.current, mb.current)
                } else {
                    (mb.current, ma.current)
                };
                current_by_key
                    .get(&key)
                    .and_then(|ks| ks.iter().copied().find(|&k| !consumed[k]))
                    .map(|k| (k, ma.displacement.max(mb.displacement)))
            }
            _ => None,
        };
        match found {
            Some((k, max_displacement)) => {
                consumed[k] = true;
                let pair = EdgePair {
                    reference: *e,
                    current: current.edges[k],
                    max_displacement,
                };
                if max_displacement > deviation_tolerance {
                    diff.deviated_edges.push(pair);
                } else {
                    diff.matched_edges.push(pair);
                }
            }
            None => diff.missing_edges.push(*e),
        }
    }
    diff.added_edges = current
        .edges
        .iter()
        .zip(&consumed)
        .filter(|(_, &c)| !c)
        .map(|(e, _)| *e)
        .collect();
    diff.summary = DiffSummary {
        reference_nodes: reference.nodes.len(),
        current_nodes: current.nodes.len(),
        matched_nodes: diff.node_matches.len(),
        reference_edges: reference.edges.len(),
        current_edges: current.edges.len(),
        matched_edges: diff.matched_edges.len(),
        deviated_edges: diff.deviated_edges.len(),
        missing_edges: diff.missing_edges.len(),
        added_edges: diff.added_edges.len(),
    };
    Ok(diff)
}

/// `match_nodes` followed by `diff_graphs`.
pub fn compare_graphs(reference: &ScaffoldGraph, current: &ScaffoldGraph, params: &DiffParams) -> Result<GraphDiff> {
    let correspondence = match_nodes(reference, current, params.node_tolerance)?;
    diff_graphs(reference, current, &correspondence, params.deviation_tolerance)
}
