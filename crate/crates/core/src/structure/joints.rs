use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::brace::BraceSegment;
use crate::geometry::centroid;
use crate::index::SpatialIndex;
use crate::{Error, Point3, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointParams {
    pub joint_radius: f64,
    pub merge_radius: f64,
    /// Mean-shift steps applied to each endpoint candidate over the
    /// joint-region points; 0 keeps the plain neighbourhood mean.
    pub refine_iterations: usize,
}

impl Default for JointParams {
    fn default() -> Self {
        JointParams {
            joint_radius: 0.08,
            merge_radius: 0.10,
            refine_iterations: 10,
        }
    }
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.joint_radius > 0.0) {
            return Err(Error::param("joint_radius", "must be positive"));
        }
        if !(self.merge_radius > 0.0) {
            return Err(Error::param("merge_radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub id: usize,
    pub position: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFormation {
    pub joints: Vec<Joint>,
    /// Joint ids of `(endpoint_a, endpoint_b)` for every brace.
    pub assignment: Vec<[usize; 2]>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

// One round of single-linkage merging; each group is placed at the mean of
// its members. Returns group positions and the member-to-group map.
fn merge_round(positions: &[Point3], merge_radius: f64) -> (Vec<Point3>, Vec<usize>) {
    let n = positions.len();
    let mut uf = UnionFind((0..n).collect());
    if n > 0 {
        let index = SpatialIndex::from_points(positions).expect("finite joint candidates");
        let mut buf = Vec::new();
        for (i, p) in positions.iter().enumerate() {
            index.radius_neighbors_into(p, merge_radius, &mut buf);
            for &j in &buf {
                uf.union(i, j);
            }
        }
    }
    // groups numbered by their smallest member
    let mut group_of_root = vec![usize::MAX; n];
    let mut map = vec![0; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        if group_of_root[root] == usize::MAX {
            group_of_root[root] = members.len();
            members.push(Vec::new());
        }
        map[i] = group_of_root[root];
        members[map[i]].push(i);
    }
    let merged = members
        .iter()
        .map(|m| centroid(m.iter().map(|&i| &positions[i])).expect("non-empty group"))
        .collect();
    (merged, map)
}

/// Joints from brace endpoints.
///
/// Each endpoint's candidate is the mean of the cloud points within
/// `joint_radius` (its own position if there are none). Candidates closer
/// than `merge_radius` are united single-linkage and replaced by their mean;
/// this repeats until all joints are more than `merge_radius` apart. Joint
/// ids follow first appearance in brace order, endpoint a before b.
pub fn form_joints(
    braces: &[BraceSegment],
    cloud: &PointCloud,
    index: &SpatialIndex,
    params: &JointParams,
) -> Result<JointFormation> {
    form_joints_refined(braces, cloud, index, &[], params)
}

/// As [`form_joints`], with each candidate then moved by up to
/// `refine_iterations` mean-shift steps over `joint_region` (cloud indices
/// of the points that belong to no brace), within `joint_radius`. A step
/// that finds no region points ends the refinement.
pub fn form_joints_refined(
    braces: &[BraceSegment],
    cloud: &PointCloud,
    index: &SpatialIndex,
    joint_region: &[usize],
    params: &JointParams,
) -> Result<JointFormation> {
    params.validate()?;
    let region: Vec<Point3> = joint_region.iter().map(|&i| cloud.points()[i]).collect();
    let region_index = if region.is_empty() || params.refine_iterations == 0 {
        None
    } else {
        Some(SpatialIndex::from_points(&region)?)
    };
    let mut buf = Vec::new();
    let mut candidates = Vec::with_capacity(braces.len() * 2);
    for brace in braces {
        for endpoint in [brace.endpoint_a, brace.endpoint_b] {
            index.radius_neighbors_into(&endpoint, params.joint_radius, &mut buf);
            let mut c = centroid(buf.iter().map(|&i| &cloud.points()[i])).unwrap_or(endpoint);
            if let Some(region_index) = &region_index {
                for _ in 0..params.refine_iterations {
                    region_index.radius_neighbors_into(&c, params.joint_radius, &mut buf);
                    let Some(next) = centroid(buf.iter().map(|&i| &region[i])) else {
                        break;
                    };
                    if next == c {
                        break;
                    }
                    c = next;
                }
            }
            candidates.push(c);
        }
    }
    let mut positions = candidates;
    let mut map: Vec<usize> = (0..positions.len()).collect();
    loop {
        let (merged, round_map) = merge_round(&positions, params.merge_radius);
        let stable = merged.len() == positions.len();
        for m in map.iter_mut() {
            *m = round_map[*m];
        }
        positions = merged;
        if stable {
            break;
        }
    }
    let joints = positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| Joint { id, position })
        .collect();
    let assignment = map.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    Ok(JointFormation { joints, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::brace::{segment_between, OrientationTolerances};

    fn brace(a: Point3, b: Point3) -> BraceSegment {
        segment_between(a, b, 0, &OrientationTolerances::default()).unwrap()
    }

    fn plain() -> JointParams {
        JointParams {
            joint_radius: 0.08,
            merge_radius: 0.05,
            refine_iterations: 0,
        }
    }

    #[test]
    fn four_braces_at_one_corner() {
        let c = Point3::new(1.0, 1.0, 1.0);
        let braces = [
            brace(c, Point3::new(2.0, 1.0, 1.0)),
            brace(c, Point3::new(1.0, 2.0, 1.0)),
            brace(c, Point3::new(1.0, 1.0, 2.0)),
            brace(Point3::new(0.0, 1.0, 1.0), c),
        ];
        let cloud = PointCloud::from_points(vec![c]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let f = form_joints(&braces, &cloud, &index, &plain()).unwrap();
        assert_eq!(f.joints.len(), 5);
        let corner = f.assignment[0][0];
        assert_eq!(f.joints[corner].position, c);
        assert_eq!(f.assignment[1][0], corner);
        assert_eq!(f.assignment[2][0], corner);
        assert_eq!(f.assignment[3][1], corner);
    }

    #[test]
    fn close_endpoints_merge_at_midpoint() {
        let braces = [
            brace(Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)),
            brace(Point3::new(0.0, 0.01, 0.0), Point3::new(0.0, 1.0, 0.0)),
        ];
        // no cloud points near the endpoints, so candidates stay in place
        let cloud = PointCloud::from_points(vec![Point3::new(5.0, 5.0, 5.0)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let f = form_joints(&braces, &cloud, &index, &plain()).unwrap();
        assert_eq!(f.joints.len(), 3);
        assert_eq!(f.assignment, vec![[0, 1], [0, 2]]);
        assert_eq!(f.joints[0].position, Point3::new(0.0, 0.005, 0.0));
    }

    #[test]
    fn chained_candidates_collapse_and_stay_separated() {
        // 0.04 apart in a row: single linkage unites all of them
        let braces: Vec<BraceSegment> = (0..5)
            .map(|i| brace(Point3::new(0.04 * i as f64, 0.0, 0.0), Point3::new(0.04 * i as f64, 0.0, 3.0 + i as f64)))
            .collect();
        let cloud = PointCloud::from_points(vec![Point3::new(50.0, 0.0, 0.0)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let f = form_joints(&braces, &cloud, &index, &plain()).unwrap();
        assert!(f.assignment.iter().all(|a| a[0] == 0));
        assert!((f.joints[0].position.x - 0.08).abs() < 1e-12);
        for (i, a) in f.joints.iter().enumerate() {
            for b in &f.joints[i + 1..] {
                assert!(a.position.distance(&b.position) > 0.05);
            }
        }
    }

    #[test]
    fn rejects_bad_radii() {
        let cloud = PointCloud::from_points(vec![Point3::ORIGIN]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let p = JointParams {
            joint_radius: 0.0,
            ..JointParams::default()
        };
        assert!(form_joints(&[], &cloud, &index, &p).is_err());
    }
}
