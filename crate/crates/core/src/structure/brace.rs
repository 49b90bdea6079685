use alloc::vec::Vec;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::clustering::Cluster;
use super::features::covariance;
use crate::math;
use crate::{Error, Point3, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HorizontalX,
    HorizontalY,
    Vertical,
    Diagonal,
}

impl Orientation {
    pub fn is_horizontal(self) -> bool {
        matches!(self, Orientation::HorizontalX | Orientation::HorizontalY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrientationTolerances {
    pub vertical_deg: f64,
    pub horizontal_deg: f64,
}

impl Default for OrientationTolerances {
    fn default() -> Self {
        OrientationTolerances {
            vertical_deg: 15.0,
            horizontal_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraceSegment {
    /// Lexicographically smaller endpoint.
    pub endpoint_a: Point3,
    pub endpoint_b: Point3,
    /// Unit vector from `endpoint_a` to `endpoint_b`.
    pub direction: [f64; 3],
    pub length: f64,
    pub orientation: Orientation,
    pub source_cluster: usize,
}

impl BraceSegment {
    pub fn direction_vector(&self) -> Vector3<f64> {
        Vector3::from(self.direction)
    }
}

/// Vertical when the sign-folded angle to the z axis is within the vertical
/// tolerance, else the horizontal axis within tolerance, else Diagonal.
pub fn classify_orientation(direction: &Vector3<f64>, tolerances: &OrientationTolerances) -> Orientation {
    let d = direction.normalize();
    let within = |component: f64, tol: f64| math::to_degrees(math::acos(component.abs())) <= tol;
    if within(d.z, tolerances.vertical_deg) {
        Orientation::Vertical
    } else if within(d.x, tolerances.horizontal_deg) {
        Orientation::HorizontalX
    } else if within(d.y, tolerances.horizontal_deg) {
        Orientation::HorizontalY
    } else {
        Orientation::Diagonal
    }
}

const EXHAUSTIVE_LIMIT: usize = 2000;

/// Indices `(i, j)`, `i < j`, of a pair at maximum squared distance, with
/// that squared distance. Among equal maxima the first pair in `(i, j)`
/// order wins. `None` for fewer than two points.
pub fn farthest_pair(points: &[Point3]) -> Option<(usize, usize, f64)> {
    if points.len() < 2 {
        return None;
    }
    if points.len() <= EXHAUSTIVE_LIMIT {
        let all: Vec<usize> = (0..points.len()).collect();
        return Some(exhaustive_pair(points, &all));
    }
    Some(pruned_pair(points))
}

fn exhaustive_pair(points: &[Point3], candidates: &[usize]) -> (usize, usize, f64) {
    let mut best = (candidates[0], candidates[1], -1.0);
    for (k, &i) in candidates.iter().enumerate() {
        for &j in &candidates[k + 1..] {
            let d2 = points[i].distance_squared(&points[j]);
            if d2 > best.2 {
                best = (i, j, d2);
            }
        }
    }
    best
}

// Projects onto the principal axis. A pair's squared distance is at most
// (projection gap)^2 + (r_i + r_j)^2 with r the distance to the axis, so a
// point whose best possible pair cannot reach the distance of a known pair
// is dropped before the exhaustive pass.
fn pruned_pair(points: &[Point3]) -> (usize, usize, f64) {
    let n = points.len();
    let cloud = PointCloud::from_parts(points.to_vec(), None);
    let all: Vec<usize> = (0..n).collect();
    let (_, axes) = math::sorted_eigen(covariance(&cloud, &all));
    let axis = axes[0];
    let origin = points[0].to_vector();
    let mut t = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for p in points {
        let v = p.to_vector() - origin;
        let along = v.dot(&axis);
        t.push(along);
        r.push(math::sqrt((v.norm_squared() - along * along).max(0.0)));
    }
    let (lo, hi) = (0..n).fold((0, 0), |(lo, hi), i| {
        (if t[i] < t[lo] { i } else { lo }, if t[i] > t[hi] { i } else { hi })
    });
    let known = if lo == hi { 0.0 } else { points[lo].distance_squared(&points[hi]) };
    let r_max = r.iter().copied().fold(0.0, f64::max);
    let slack = 1e-9 * (1.0 + known);
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let gap = (t[i] - t[lo]).max(t[hi] - t[i]);
            let reach = r[i] + r_max;
            gap * gap + reach * reach + slack >= known
        })
        .collect();
    if candidates.len() < 2 {
        return exhaustive_pair(points, &all);
    }
    exhaustive_pair(points, &candidates)
}

/// Brace segment spanned by the farthest pair of the cluster's points.
pub fn extract_brace(cloud: &PointCloud, cluster: &Cluster, tolerances: &OrientationTolerances) -> Result<BraceSegment> {
    let points: Vec<Point3> = cluster.point_indices.iter().map(|&i| cloud.points()[i]).collect();
    let (i, j, d2) = farthest_pair(&points).ok_or(Error::TooFewPoints {
        needed: 2,
        got: points.len(),
    })?;
    if !(d2 > 0.0) {
        return Err(Error::Degenerate("brace cluster points are coincident"));
    }
    segment_between(points[i], points[j], cluster.label, tolerances)
}

pub(crate) fn segment_between(
    p: Point3,
    q: Point3,
    source_cluster: usize,
    tolerances: &OrientationTolerances,
) -> Result<BraceSegment> {
    let (a, b) = if p.lex_cmp(&q).is_le() { (p, q) } else { (q, p) };
    let length = a.distance(&b);
    if !(length > 0.0) {
        return Err(Error::Degenerate("brace endpoints coincide"));
    }
    let direction = (b - a) / length;
    Ok(BraceSegment {
        endpoint_a: a,
        endpoint_b: b,
        direction: [direction.x, direction.y, direction.z],
        length,
        orientation: classify_orientation(&direction, tolerances),
        source_cluster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn brute(points: &[Point3]) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.max(points[i].distance_squared(&points[j]));
            }
        }
        best
    }

    #[test]
    fn collinear_extremes() {
        let cloud = PointCloud::from_points(
            [0.3, 1.0, 0.0, 0.7].iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect(),
        )
        .unwrap();
        let cluster = Cluster {
            label: 7,
            point_indices: vec![0, 1, 2, 3],
        };
        let b = extract_brace(&cloud, &cluster, &OrientationTolerances::default()).unwrap();
        assert_eq!(b.endpoint_a, Point3::ORIGIN);
        assert_eq!(b.endpoint_b, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(b.length, 1.0);
        assert_eq!(b.direction, [1.0, 0.0, 0.0]);
        assert_eq!(b.orientation, Orientation::HorizontalX);
        assert_eq!(b.source_cluster, 7);
    }

    #[test]
    fn degenerate_clusters() {
        let cloud = PointCloud::from_points(vec![Point3::ORIGIN; 3]).unwrap();
        let t = OrientationTolerances::default();
        let one = Cluster {
            label: 0,
            point_indices: vec![0],
        };
        assert!(matches!(extract_brace(&cloud, &one, &t), Err(Error::TooFewPoints { .. })));
        let same = Cluster {
            label: 0,
            point_indices: vec![0, 1, 2],
        };
        assert!(matches!(extract_brace(&cloud, &same, &t), Err(Error::Degenerate(_))));
    }

    #[test]
    fn orientation_classes() {
        let t = OrientationTolerances::default();
        assert_eq!(classify_orientation(&Vector3::z(), &t), Orientation::Vertical);
        assert_eq!(classify_orientation(&-Vector3::z(), &t), Orientation::Vertical);
        assert_eq!(classify_orientation(&Vector3::x(), &t), Orientation::HorizontalX);
        assert_eq!(classify_orientation(&Vector3::y(), &t), Orientation::HorizontalY);
        assert_eq!(classify_orientation(&Vector3::new(1.0, 1.0, 0.0), &t), Orientation::Diagonal);
        assert_eq!(classify_orientation(&Vector3::new(2.0, 0.0, 1.0), &t), Orientation::Diagonal);
        let tilt = math::sin(math::to_radians(14.0));
        assert_eq!(
            classify_orientation(&Vector3::new(tilt, 0.0, math::cos(math::to_radians(14.0))), &t),
            Orientation::Vertical
        );
    }

    #[test]
    fn noisy_brace_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let pts: Vec<Point3> = (0..=600)
            .map(|i| {
                Point3::new(
                    0.0025 * i as f64 + noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    1.0 + noise.sample(&mut rng),
                )
            })
            .collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        let cluster = Cluster {
            label: 0,
            point_indices: (0..cloud.len()).collect(),
        };
        let b = extract_brace(&cloud, &cluster, &OrientationTolerances::default()).unwrap();
        assert!((b.length - 1.5).abs() < 0.015, "{}", b.length);
        assert_eq!(b.length, brute(cloud.points()).sqrt());
    }

    #[test]
    fn pruned_search_matches_exhaustive_on_large_clusters() {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..2600)
                .map(|_| {
                    let s = rng.random_range(0.0..2.0);
                    let a = rng.random_range(0.0..core::f64::consts::TAU);
                    Point3::new(s, 0.024 * math::cos(a), 0.5 + 0.024 * math::sin(a))
                })
                .collect();
            let all: Vec<usize> = (0..pts.len()).collect();
            assert_eq!(farthest_pair(&pts), Some(exhaustive_pair(&pts, &all)));
            // a cube gives the pruning nothing to discard
            let cube: Vec<Point3> = (0..2100)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let all: Vec<usize> = (0..cube.len()).collect();
            assert_eq!(farthest_pair(&cube), Some(exhaustive_pair(&cube, &all)));
        }
    }

    proptest::proptest! {
        #[test]
        fn farthest_pair_is_the_maximum(pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 2..80)) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let (i, j, d2) = farthest_pair(&pts).unwrap();
            proptest::prop_assert!(i < j);
            proptest::prop_assert_eq!(d2, brute(&pts));
            proptest::prop_assert_eq!(pts[i].distance_squared(&pts[j]), d2);
        }
    }
}
