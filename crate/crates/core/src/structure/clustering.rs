//! Spatial DBSCAN and the direction-based refinement of clusters that merge
//! differently oriented braces.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::features::ShapeFeatures;
use crate::index::SpatialIndex;
use crate::math;
use crate::{Error, Point3, PointCloud, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: usize,
    /// Ascending indices into the clustered cloud.
    pub point_indices: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// DBSCAN output: per-point labels (`None` for noise) and the clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<Cluster>,
}

impl Clustering {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

fn check_dbscan(eps: f64, min_pts: usize) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if min_pts == 0 {
        return Err(Error::param("min_pts", "must be at least 1"));
    }
    Ok(())
}

/// Density-based clustering.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are seeded in ascending point order and expanded
/// breadth-first, so a border point joins the first cluster that reaches it.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Result<Clustering> {
    check_dbscan(eps, min_pts)?;
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut clusters = Vec::new();
    if n == 0 {
        return Ok(Clustering { labels, clusters });
    }
    let index = SpatialIndex::from_points(points)?;
    let mut expanded = vec![false; n];
    let mut neighbors = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed].is_some() || expanded[seed] {
            continue;
        }
        expanded[seed] = true;
        index.radius_neighbors_into(&points[seed], eps, &mut neighbors);
        if neighbors.len() < min_pts {
            continue;
        }
        let label = clusters.len();
        let mut members = vec![seed];
        labels[seed] = Some(label);
        queue.extend(neighbors.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j].is_some() {
                continue;
            }
            labels[j] = Some(label);
            members.push(j);
            if expanded[j] {
                // visited earlier as a non-core point
                continue;
            }
            expanded[j] = true;
            index.radius_neighbors_into(&points[j], eps, &mut neighbors);
            if neighbors.len() >= min_pts {
                queue.extend(neighbors.iter().copied().filter(|&k| labels[k].is_none()));
            }
        }
        members.sort_unstable();
        clusters.push(Cluster {
            label,
            point_indices: members,
        });
    }
    Ok(Clustering { labels, clusters })
}

/// DBSCAN restricted to `subset` of `cloud`; clusters hold cloud indices.
pub fn dbscan_subset(cloud: &PointCloud, subset: &[usize], eps: f64, min_pts: usize) -> Result<Vec<Cluster>> {
    let points: Vec<Point3> = subset.iter().map(|&i| cloud.points()[i]).collect();
    let clustering = dbscan(&points, eps, min_pts)?;
    Ok(clustering
        .clusters
        .into_iter()
        .map(|c| {
            let mut idx: Vec<usize> = c.point_indices.iter().map(|&k| subset[k]).collect();
            idx.sort_unstable();
            Cluster {
                label: c.label,
                point_indices: idx,
            }
        })
        .collect())
}

fn directions_of(cluster: &Cluster, features: &[ShapeFeatures]) -> Vec<(usize, Vector3<f64>)> {
    cluster
        .point_indices
        .iter()
        .filter(|&&i| features[i].is_defined())
        .map(|&i| (i, features[i].principal_direction))
        .collect()
}

fn max_pairwise_exceeds(dirs: &[(usize, Vector3<f64>)], angle_deg: f64) -> bool {
    let cos_limit = math::cos(math::to_radians(angle_deg));
    for (k, (_, a)) in dirs.iter().enumerate() {
        for (_, b) in &dirs[k + 1..] {
            // angle > limit  <=>  |cos| < cos(limit)
            if a.dot(b).abs() < cos_limit {
                return true;
            }
        }
    }
    false
}

/// True when the per-point principal directions of `cluster` are not
/// consistent with a single line: some pair of directions, folded onto a
/// hemisphere, is more than `mixing_angle_deg` apart.
pub fn detect_mixed_cluster(cluster: &Cluster, features: &[ShapeFeatures], mixing_angle_deg: f64) -> bool {
    max_pairwise_exceeds(&directions_of(cluster, features), mixing_angle_deg)
}

struct DirectionGroup {
    sum: Vector3<f64>,
    seed: Vector3<f64>,
    members: Vec<usize>,
}

impl DirectionGroup {
    fn new(i: usize, d: Vector3<f64>) -> Self {
        DirectionGroup {
            sum: d,
            seed: d,
            members: vec![i],
        }
    }

    fn mean(&self) -> Vector3<f64> {
        self.sum.normalize()
    }

    fn add(&mut self, i: usize, d: Vector3<f64>) {
        let aligned = if d.dot(&self.sum) < 0.0 { -d } else { d };
        self.sum += aligned;
        self.members.push(i);
    }
}

// Greedy grouping against each group's running mean direction.
fn group_by_running_mean(dirs: &[(usize, Vector3<f64>)], angle_deg: f64) -> Vec<DirectionGroup> {
    let cos_limit = math::cos(math::to_radians(angle_deg));
    let mut groups: Vec<DirectionGroup> = Vec::new();
    for &(i, d) in dirs {
        let best = groups
            .iter()
            .enumerate()
            .map(|(g, group)| (g, group.mean().dot(&d).abs()))
            .filter(|&(_, c)| c >= cos_limit)
            .fold(None, |best: Option<(usize, f64)>, (g, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((g, c)),
            });
        match best {
            Some((g, _)) => groups[g].add(i, d),
            None => groups.push(DirectionGroup::new(i, d)),
        }
    }
    groups
}

// Groups anchored on their seed direction with half the angle, which bounds
// every pairwise angle inside a group by `angle_deg`.
fn group_by_seed(dirs: &[(usize, Vector3<f64>)], angle_deg: f64) -> Vec<DirectionGroup> {
    let cos_half = math::cos(math::to_radians(angle_deg / 2.0));
    let mut groups: Vec<DirectionGroup> = Vec::new();
    for &(i, d) in dirs {
        match groups.iter_mut().find(|g| g.seed.dot(&d).abs() >= cos_half) {
            Some(g) => g.add(i, d),
            None => groups.push(DirectionGroup::new(i, d)),
        }
    }
    groups
}

/// Splits a cluster that mixes brace directions.
///
/// Stage one groups points by principal direction: each point (in ascending
/// index order) joins the group whose running mean direction is closest,
/// if within `angle_threshold_deg`, otherwise it starts a new group. A group
/// whose directions still spread beyond the threshold is regrouped around
/// seed directions. Stage two re-runs DBSCAN inside every direction group to
/// restore spatial coherence; points it marks as noise are dropped.
/// Returned clusters are labelled from 0.
pub fn hybrid_cluster(
    cluster: &Cluster,
    cloud: &PointCloud,
    features: &[ShapeFeatures],
    angle_threshold_deg: f64,
    eps: f64,
    min_pts: usize,
) -> Result<Vec<Cluster>> {
    if !(angle_threshold_deg > 0.0 && angle_threshold_deg < 90.0) {
        return Err(Error::param("hybrid_angle", "must lie in (0, 90) degrees"));
    }
    check_dbscan(eps, min_pts)?;
    let dirs = directions_of(cluster, features);
    let mut groups = Vec::new();
    for group in group_by_running_mean(&dirs, angle_threshold_deg) {
        let members: Vec<(usize, Vector3<f64>)> =
            group.members.iter().map(|&i| (i, features[i].principal_direction)).collect();
        if max_pairwise_exceeds(&members, angle_threshold_deg) {
            groups.extend(group_by_seed(&members, angle_threshold_deg));
        } else {
            groups.push(group);
        }
    }
    let mut out = Vec::new();
    for group in groups {
        let mut members = group.members;
        members.sort_unstable();
        for sub in dbscan_subset(cloud, &members, eps, min_pts)? {
            out.push(Cluster {
                label: out.len(),
                point_indices: sub.point_indices,
            });
        }
    }
    Ok(out)
}
