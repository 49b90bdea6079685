//! Point-cloud container and the density/outlier filters applied before
//! any comparison.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point3};
use crate::index::SpatialIndex;
use crate::math;
use crate::{Error, Result};

/// 8-bit RGB color.
pub type Rgb = [u8; 3];

/// An ordered set of finite points with optional per-point colors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, colors: Option<Vec<Rgb>>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { index });
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::ColorLengthMismatch {
                    points: points.len(),
                    colors: c.len(),
                });
            }
        }
        Ok(PointCloud { points, colors })
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        Self::new(points, None)
    }

    /// Caller guarantees the invariants (finite points, matching colors).
    pub(crate) fn from_parts(points: Vec<Point3>, colors: Option<Vec<Rgb>>) -> Self {
        debug_assert!(points.iter().all(Point3::is_finite));
        debug_assert!(colors.as_ref().is_none_or(|c| c.len() == points.len()));
        PointCloud { points, colors }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<Rgb>>) {
        (self.points, self.colors)
    }

    /// Replaces (or sets) the colors.
    pub fn with_colors(self, colors: Vec<Rgb>) -> Result<Self> {
        PointCloud::new(self.points, Some(colors))
    }

    pub fn without_colors(mut self) -> Self {
        self.colors = None;
        self
    }

    /// The sub-cloud at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let colors = self
            .colors
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        PointCloud::from_parts(points, colors)
    }

    pub fn centroid(&self) -> Option<Point3> {
        crate::geometry::centroid(&self.points)
    }

    /// Concatenation of two clouds. Colors survive only if both have them.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => {
                let mut c = a.clone();
                c.extend_from_slice(b);
                Some(c)
            }
            _ => None,
        };
        PointCloud::from_parts(points, colors)
    }
}

/// Componentwise bounds of a non-empty cloud.
pub fn bounding_box(cloud: &PointCloud) -> Result<Aabb> {
    let first = *cloud.points().first().ok_or(Error::EmptyCloud)?;
    let (lo, hi) = cloud.points().iter().fold((first, first), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    });
    Ok(Aabb::from_corners(lo, hi))
}

/// Voxel cell of a point for a grid anchored at the origin.
#[inline]
pub fn voxel_key(p: &Point3, voxel_size: f64) -> [i64; 3] {
    [
        math::floor(p.x / voxel_size) as i64,
        math::floor(p.y / voxel_size) as i64,
        math::floor(p.z / voxel_size) as i64,
    ]
}

#[derive(Default)]
struct VoxelAcc {
    sum: [f64; 3],
    color_sum: [u64; 3],
    count: u64,
}

/// Replaces the points of each occupied voxel by their centroid.
///
/// The grid is anchored at the origin; a point on a cell boundary belongs to
/// the higher cell. Output is ordered by ascending voxel coordinate, colors
/// are the rounded per-channel mean.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::param("voxel_size", "must be a positive finite length"));
    }
    let mut cells: BTreeMap<[i64; 3], VoxelAcc> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let acc = cells.entry(voxel_key(p, voxel_size)).or_default();
        acc.sum[0] += p.x;
        acc.sum[1] += p.y;
        acc.sum[2] += p.z;
        acc.count += 1;
        if let Some(colors) = cloud.colors() {
            for (s, &c) in acc.color_sum.iter_mut().zip(colors[i].iter()) {
                *s += c as u64;
            }
        }
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut colors = cloud.colors().map(|_| Vec::with_capacity(cells.len()));
    for acc in cells.values() {
        let n = acc.count as f64;
        points.push(Point3::new(acc.sum[0] / n, acc.sum[1] / n, acc.sum[2] / n));
        if let Some(colors) = colors.as_mut() {
            // round half up in integer arithmetic
            colors.push(acc.color_sum.map(|s| ((2 * s + acc.count) / (2 * acc.count)) as u8));
        }
    }
    Ok(PointCloud::from_parts(points, colors))
}

/// Per-point mean distance to the `k` nearest other points.
pub fn mean_neighbor_distances(cloud: &PointCloud, index: &SpatialIndex, k: usize) -> Vec<f64> {
    cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut neighbors = index.k_nearest(p, k + 1);
            match neighbors.iter().position(|n| n.index == i) {
                Some(pos) => {
                    neighbors.remove(pos);
                }
                None => {
                    neighbors.pop();
                }
            }
            let sum: f64 = neighbors.iter().map(|n| n.distance()).sum();
            sum / k as f64
        })
        .collect()
}

/// Indices kept by the statistical outlier filter, ascending.
pub fn statistical_outlier_inliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if !(std_ratio > 0.0) {
        return Err(Error::param("std_ratio", "must be positive"));
    }
    if cloud.len() <= k {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: cloud.len(),
        });
    }
    let index = SpatialIndex::build(cloud)?;
    let means = mean_neighbor_distances(cloud, &index, k);
    let n = means.len() as f64;
    let global_mean = means.iter().sum::<f64>() / n;
    let variance = means
        .iter()
        .map(|d| (d - global_mean) * (d - global_mean))
        .sum::<f64>()
        / n;
    let threshold = global_mean + std_ratio * math::sqrt(variance);
    Ok((0..cloud.len()).filter(|&i| means[i] <= threshold).collect())
}

/// Drops points whose mean distance to their `k` nearest neighbours exceeds
/// the global mean by more than `std_ratio` standard deviations. Survivors
/// keep their relative order.
pub fn remove_statistical_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<PointCloud> {
    let keep = statistical_outlier_inliers(cloud, k, std_ratio)?;
    Ok(cloud.select(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(points.iter().map(|&p| p.into()).collect()).unwrap()
    }

    fn random_cloud(n: usize, seed: u64, extent: f64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                )
            })
            .collect();
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_mismatched_colors() {
        let err = PointCloud::from_points(vec![Point3::ORIGIN, Point3::new(f64::NAN, 0.0, 0.0)]);
        assert_eq!(err.unwrap_err(), Error::NonFinitePoint { index: 1 });
        let err = PointCloud::new(vec![Point3::ORIGIN], Some(vec![]));
        assert!(matches!(err, Err(Error::ColorLengthMismatch { .. })));
    }

    #[test]
    fn bounding_box_of_unit_cube() {
        let mut corners = Vec::new();
        for i in 0..8 {
            corners.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        let b = bounding_box(&cloud(&corners)).unwrap();
        assert_eq!(b.min_corner, Point3::ORIGIN);
        assert_eq!(b.max_corner, Point3::new(1.0, 1.0, 1.0));
        assert!((b.diagonal - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bounding_box_single_point_and_empty() {
        let b = bounding_box(&cloud(&[[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(b.min_corner, b.max_corner);
        assert_eq!(b.diagonal, 0.0);
        assert_eq!(bounding_box(&PointCloud::default()), Err(Error::EmptyCloud));
    }

    #[test]
    fn bounding_box_matches_scan() {
        let c = random_cloud(1000, 9, 4.0);
        let b = bounding_box(&c).unwrap();
        let xs: Vec<f64> = c.points().iter().map(|p| p.x).collect();
        assert_eq!(b.min_corner.x, xs.iter().cloned().fold(f64::INFINITY, f64::min));
        assert_eq!(b.max_corner.x, xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        assert!(c.points().iter().all(|p| b.contains(p)));
    }

    #[test]
    fn voxel_centroid_of_two_points() {
        let out = voxel_downsample(&cloud(&[[0.1, 0.0, 0.0], [0.3, 0.0, 0.0]]), 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points()[0].x - 0.2).abs() < 1e-15);
    }

    #[test]
    fn voxel_boundary_goes_to_higher_cell() {
        assert_eq!(voxel_key(&Point3::new(1.0, -1.0, 0.0), 0.5), [2, -2, 0]);
        let out = voxel_downsample(&cloud(&[[0.999, 0.0, 0.0], [1.0, 0.0, 0.0]]), 1.0).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn voxel_sparse_cloud_unchanged_in_count() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 * 2.0 + 0.5, 0.5, 0.5]).collect();
        let out = voxel_downsample(&cloud(&pts), 1.0).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(out.points()[3], Point3::new(6.5, 0.5, 0.5));
    }

    #[test]
    fn voxel_color_mean_is_rounded() {
        let c = cloud(&[[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]])
            .with_colors(vec![[0, 10, 255], [1, 13, 254]])
            .unwrap();
        let out = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(out.colors().unwrap(), &[[1, 12, 255]]);
    }

    #[test]
    fn voxel_rejects_bad_size() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(voxel_downsample(&c, 0.0).is_err());
        assert!(voxel_downsample(&c, -1.0).is_err());
        assert!(voxel_downsample(&c, f64::NAN).is_err());
    }

    #[test]
    fn voxel_count_matches_hashing_oracle() {
        let c = random_cloud(100_000, 11, 3.0);
        let s = 0.25;
        let cells: BTreeSet<(i64, i64, i64)> = c
            .points()
            .iter()
            .map(|p| {
                (
                    (p.x / s).floor() as i64,
                    (p.y / s).floor() as i64,
                    (p.z / s).floor() as i64,
                )
            })
            .collect();
        assert_eq!(voxel_downsample(&c, s).unwrap().len(), cells.len());
    }

    #[test]
    fn far_point_is_the_only_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Point3> = (0..100)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..0.1),
                    rng.random_range(0.0..0.1),
                    rng.random_range(0.0..0.1),
                )
            })
            .collect();
        // cluster diameter is at most 0.1*sqrt(3)
        pts.insert(42, Point3::new(17.4, 0.0, 0.0));
        let c = PointCloud::from_points(pts.clone()).unwrap();
        let kept = statistical_outlier_inliers(&c, 10, 2.0).unwrap();
        let expected: Vec<usize> = (0..101).filter(|&i| i != 42).collect();
        assert_eq!(kept, expected);
    }

    #[test]
    fn grid_without_outliers_is_unchanged() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..3 {
                    pts.push([i as f64, j as f64, k as f64]);
                }
            }
        }
        // a regular grid still has corner points with a larger mean distance,
        // so use a ratio wide enough to accept them
        let c = cloud(&pts);
        assert_eq!(remove_statistical_outliers(&c, 6, 3.0).unwrap(), c);
    }

    #[test]
    fn coincident_points_are_all_kept() {
        let c = cloud(&[[1.0, 2.0, 3.0]; 30]);
        assert_eq!(remove_statistical_outliers(&c, 5, 1.0).unwrap(), c);
    }

    #[test]
    fn outlier_filter_needs_more_than_k_points() {
        let c = cloud(&[[0.0, 0.0, 0.0]; 5]);
        assert_eq!(
            remove_statistical_outliers(&c, 5, 2.0).unwrap_err(),
            Error::TooFewPoints { needed: 6, got: 5 }
        );
    }

    proptest::proptest! {
        #[test]
        fn voxel_never_grows_and_is_idempotent_in_count(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..300),
            size in 0.05f64..1.0,
        ) {
            let c = PointCloud::from_points(pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).unwrap();
            let once = voxel_downsample(&c, size).unwrap();
            proptest::prop_assert!(once.len() <= c.len());
            let twice = voxel_downsample(&once, size).unwrap();
            proptest::prop_assert_eq!(twice.len(), once.len());
        }

        #[test]
        fn outlier_filter_is_a_subsequence(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 12..200),
            ratio in 0.1f64..3.0,
        ) {
            let c = PointCloud::from_points(pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).unwrap();
            let kept = statistical_outlier_inliers(&c, 8, ratio).unwrap();
            proptest::prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            let out = remove_statistical_outliers(&c, 8, ratio).unwrap();
            proptest::prop_assert_eq!(out.points().to_vec(), kept.iter().map(|&i| c.points()[i]).collect::<Vec<_>>());
        }
    }
}
