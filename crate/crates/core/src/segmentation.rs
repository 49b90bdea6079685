//! Planar-surface removal: seeded RANSAC plane fitting, iterative removal of
//! the dominant planes (ground, wall) and cropping by distance from the wall.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Point3, PointCloud, Result};

/// Plane `{p : normal·p + offset = 0}` with the inliers it was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(skip)]
    pub inlier_indices: Vec<usize>,
    pub inlier_count: usize,
}

impl PlaneModel {
    pub fn normal_vector(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z + self.offset
    }

    /// Same plane with the normal (and offset) negated.
    pub fn flipped(&self) -> PlaneModel {
        PlaneModel {
            normal: self.normal.map(|c| -c),
            offset: -self.offset,
            ..self.clone()
        }
    }

    /// Angle between the plane normal and the vertical axis, in degrees.
    pub fn tilt_degrees(&self) -> f64 {
        math::to_degrees(math::acos(self.normal[2].abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub inlier_distance: f64,
    pub max_iterations: usize,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_distance: 0.03,
            max_iterations: 1000,
            min_inlier_fraction: 0.10,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_distance > 0.0) || !self.inlier_distance.is_finite() {
            return Err(Error::param("inlier_distance", "must be a positive length"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::param("min_inlier_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn plane_through(a: &Point3, b: &Point3, c: &Point3) -> Option<(Vector3<f64>, f64)> {
    let u = *b - *a;
    let v = *c - *a;
    let n = u.cross(&v);
    let norm = n.norm();
    if norm == 0.0 || norm <= 1e-12 * u.norm() * v.norm() {
        return None;
    }
    let n = n / norm;
    Some((n, -n.dot(&a.to_vector())))
}

fn inliers_of(points: &[Point3], normal: &Vector3<f64>, offset: f64, dist: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(&p.to_vector()) + offset).abs() <= dist)
        .map(|(i, _)| i)
        .collect()
}

fn count_inliers(points: &[Point3], normal: &Vector3<f64>, offset: f64, dist: f64) -> usize {
    points
        .iter()
        .filter(|p| (normal.dot(&p.to_vector()) + offset).abs() <= dist)
        .count()
}

/// Least-squares plane through `indices`: the centroid and the direction of
/// least variance of their covariance.
pub fn fit_plane_least_squares(points: &[Point3], indices: &[usize]) -> Option<(Vector3<f64>, f64)> {
    if indices.len() < 3 {
        return None;
    }
    let n = indices.len() as f64;
    let mean = indices.iter().map(|&i| points[i].to_vector()).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for &i in indices {
        let d = points[i].to_vector() - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let (values, vectors) = math::sorted_eigen(cov);
    if !(values[1] > 0.0) {
        return None;
    }
    let normal = vectors[2];
    Some((normal, -normal.dot(&mean)))
}

/// Fits the plane with the largest inlier count by seeded RANSAC, then
/// refines it by least squares over its inliers.
///
/// Iterations run in seed order; on equal inlier counts the earliest
/// iteration wins. The refined plane is kept only if it does not lose
/// inliers. The normal's largest component is made positive.
pub fn ransac_plane(cloud: &PointCloud, params: &RansacParams) -> Result<PlaneModel> {
    params.validate()?;
    let points = cloud.points();
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vector3<f64>, f64, usize)> = None;
    for _ in 0..params.max_iterations {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..n - 2);
        for lowest in [a.min(b), a.max(b)] {
            if c >= lowest {
                c += 1;
            }
        }
        let Some((normal, offset)) = plane_through(&points[a], &points[b], &points[c]) else {
            continue;
        };
        let count = count_inliers(points, &normal, offset, params.inlier_distance);
        if best.is_none_or(|(_, _, best_count)| count > best_count) {
            best = Some((normal, offset, count));
        }
    }
    let (mut normal, mut offset, _) = best.ok_or(Error::AllSamplesCollinear)?;
    let mut inliers = inliers_of(points, &normal, offset, params.inlier_distance);
    if let Some((refined_normal, refined_offset)) = fit_plane_least_squares(points, &inliers) {
        let refined = inliers_of(points, &refined_normal, refined_offset, params.inlier_distance);
        if refined.len() >= inliers.len() {
            normal = refined_normal;
            offset = refined_offset;
            inliers = refined;
        }
    }
    let required = min_inliers(n, params.min_inlier_fraction);
    if inliers.len() < required {
        return Err(Error::InsufficientInliers {
            inliers: inliers.len(),
            required,
        });
    }
    let canonical = math::canonical_sign(normal);
    if canonical != normal {
        normal = canonical;
        offset = -offset;
    }
    Ok(PlaneModel {
        normal: [normal.x, normal.y, normal.z],
        offset,
        inlier_count: inliers.len(),
        inlier_indices: inliers,
    })
}

fn min_inliers(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let r = math::floor(raw) as usize;
    if (r as f64) < raw {
        r + 1
    } else {
        r
    }
}

/// Outcome of [`remove_planes`].
#[derive(Debug, Clone)]
pub struct PlaneRemoval {
    pub remaining: PointCloud,
    /// Indices of `remaining` in the input cloud.
    pub kept_indices: Vec<usize>,
    /// Removed planes in removal order; inlier indices refer to the input.
    pub planes: Vec<PlaneModel>,
    /// Why removal stopped before `n_planes`, if it did.
    pub stopped_early: Option<Error>,
}

/// Repeatedly fits the dominant plane and deletes its inliers, up to
/// `n_planes` times. A fit that fails (typically on the inlier-fraction bar)
/// ends the loop without an error. The seed is advanced by one per plane.
pub fn remove_planes(cloud: &PointCloud, n_planes: usize, params: &RansacParams) -> Result<PlaneRemoval> {
    if n_planes == 0 {
        return Err(Error::param("n_planes", "must be at least 1"));
    }
    params.validate()?;
    let mut kept: Vec<usize> = (0..cloud.len()).collect();
    let mut remaining = cloud.clone();
    let mut planes = Vec::new();
    let mut stopped_early = None;
    for round in 0..n_planes {
        let round_params = RansacParams {
            seed: params.seed.wrapping_add(round as u64),
            ..*params
        };
        let mut plane = match ransac_plane(&remaining, &round_params) {
            Ok(p) => p,
            Err(e) => {
                stopped_early = Some(e);
                break;
            }
        };
        let mut is_inlier = alloc::vec![false; remaining.len()];
        for &i in &plane.inlier_indices {
            is_inlier[i] = true;
        }
        plane.inlier_indices = plane.inlier_indices.iter().map(|&i| kept[i]).collect();
        let survivors: Vec<usize> = (0..remaining.len()).filter(|&i| !is_inlier[i]).collect();
        remaining = remaining.select(&survivors);
        kept = survivors.iter().map(|&i| kept[i]).collect();
        planes.push(plane);
    }
    Ok(PlaneRemoval {
        remaining,
        kept_indices: kept,
        planes,
        stopped_early,
    })
}

/// Which of the removed planes are the ground and the wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlaneRoles {
    pub ground: Option<usize>,
    pub wall: Option<usize>,
}

/// Ground: the largest plane whose normal is within `tolerance_deg` of
/// vertical. Wall: the largest plane whose normal is within `tolerance_deg`
/// of horizontal.
pub fn identify_planes(planes: &[PlaneModel], tolerance_deg: f64) -> PlaneRoles {
    let largest = |pred: &dyn Fn(&PlaneModel) -> bool| {
        planes
            .iter()
            .enumerate()
            .filter(|(_, p)| pred(p))
            .fold(None, |best: Option<(usize, usize)>, (i, p)| match best {
                Some((_, c)) if c >= p.inlier_count => best,
                _ => Some((i, p.inlier_count)),
            })
            .map(|(i, _)| i)
    };
    let ground = largest(&|p| p.tilt_degrees() <= tolerance_deg);
    let wall = largest(&|p| p.tilt_degrees() >= 90.0 - tolerance_deg);
    PlaneRoles { ground, wall }
}

/// The wall plane with its normal pointing towards the cloud's centroid.
pub fn orient_towards(cloud: &PointCloud, wall: &PlaneModel) -> PlaneModel {
    match cloud.centroid() {
        Some(c) if wall.signed_distance(&c) < 0.0 => wall.flipped(),
        _ => wall.clone(),
    }
}

/// Indices of the points with `0 <= signed distance <= max_distance` from
/// the wall, with the wall normal oriented towards the cloud centroid.
pub fn crop_indices(cloud: &PointCloud, wall: &PlaneModel, max_distance: f64) -> Result<Vec<usize>> {
    if !(max_distance > 0.0) {
        return Err(Error::param("max_distance", "must be positive"));
    }
    let n = wall.normal_vector().norm();
    if (n - 1.0).abs() > 1e-9 || !wall.offset.is_finite() {
        return Err(Error::param("wall", format!("normal has length {n}")));
    }
    let wall = orient_towards(cloud, wall);
    Ok(cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let d = wall.signed_distance(p);
            (0.0..=max_distance).contains(&d)
        })
        .map(|(i, _)| i)
        .collect())
}

/// Keeps the points between the wall and `max_distance` in front of it.
pub fn crop_by_plane_offset(cloud: &PointCloud, wall: &PlaneModel, max_distance: f64) -> Result<PointCloud> {
    Ok(cloud.select(&crop_indices(cloud, wall, max_distance)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid_on_plane(n: usize, f: impl Fn(f64, f64) -> Point3) -> Vec<Point3> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                out.push(f(i as f64 / n as f64 * 4.0 - 2.0, j as f64 / n as f64 * 4.0 - 2.0));
            }
        }
        out
    }

    fn plane_with_clutter(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0))
            .collect();
        for _ in 0..50 {
            pts.push(Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.2..2.0),
            ));
        }
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn finds_plane_under_clutter() {
        let c = plane_with_clutter(5);
        let plane = ransac_plane(&c, &RansacParams::default()).unwrap();
        assert_eq!(plane.normal, [0.0, 0.0, 1.0]);
        assert_eq!(plane.offset.abs(), 0.0);
        assert_eq!(plane.inlier_count, 1000);
        assert_eq!(plane.inlier_indices, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn three_points_give_their_plane() {
        let c = PointCloud::from_points(vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ])
        .unwrap();
        let plane = ransac_plane(&c, &RansacParams::default()).unwrap();
        assert_eq!(plane.normal, [0.0, 0.0, 1.0]);
        assert!((plane.offset + 1.0).abs() < 1e-12);
        assert_eq!(plane.inlier_count, 3);
    }

    #[test]
    fn ransac_is_deterministic() {
        let c = plane_with_clutter(6);
        let p = RansacParams {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(ransac_plane(&c, &p).unwrap(), ransac_plane(&c, &p).unwrap());
    }

    #[test]
    fn ransac_error_paths() {
        let two = PointCloud::from_points(vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(
            ransac_plane(&two, &RansacParams::default()).unwrap_err(),
            Error::TooFewPoints { needed: 3, got: 2 }
        );
        let line = PointCloud::from_points((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        assert_eq!(
            ransac_plane(&line, &RansacParams::default()).unwrap_err(),
            Error::AllSamplesCollinear
        );
        let bad = RansacParams {
            min_inlier_fraction: 0.0,
            ..Default::default()
        };
        assert!(ransac_plane(&line, &bad).is_err());
    }

    #[test]
    fn tilted_plane_recovered_exactly() {
        let truth = Vector3::new(0.3, -0.5, 0.8).normalize();
        let offset = -1.25;
        // two in-plane axes
        let e1 = truth.cross(&Vector3::x()).normalize();
        let e2 = truth.cross(&e1);
        let origin = truth * -offset;
        let pts = grid_on_plane(30, |u, v| Point3::from_vector(&(origin + e1 * u + e2 * v)));
        let c = PointCloud::from_points(pts).unwrap();
        let plane = ransac_plane(&c, &RansacParams::default()).unwrap();
        let n = plane.normal_vector();
        let angle = math::axis_angle_between(&n, &truth);
        assert!(angle < 1e-6, "angle {angle}");
        let signed_offset = if n.dot(&truth) > 0.0 { plane.offset } else { -plane.offset };
        assert!((signed_offset - offset).abs() < 1e-9);
    }

    #[test]
    fn uniform_blob_has_no_dominant_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let c = PointCloud::from_points(pts).unwrap();
        let params = RansacParams {
            min_inlier_fraction: 0.3,
            ..Default::default()
        };
        let out = remove_planes(&c, 2, &params).unwrap();
        assert!(out.planes.is_empty());
        assert_eq!(out.remaining, c);
        assert!(matches!(out.stopped_early, Some(Error::InsufficientInliers { .. })));
    }

    #[test]
    fn removes_larger_plane_first() {
        let mut pts = grid_on_plane(40, |u, v| Point3::new(u, v, 0.0));
        pts.extend(grid_on_plane(25, |u, v| Point3::new(u, 3.0, v + 2.5)));
        let c = PointCloud::from_points(pts).unwrap();
        let out = remove_planes(&c, 1, &RansacParams::default()).unwrap();
        assert_eq!(out.planes.len(), 1);
        assert_eq!(out.planes[0].normal, [0.0, 0.0, 1.0]);
        assert_eq!(out.remaining.len(), 625);
        assert_eq!(out.kept_indices, (1600..2225).collect::<Vec<_>>());

        let both = remove_planes(&c, 2, &RansacParams::default()).unwrap();
        assert!(both.remaining.is_empty());
        let roles = identify_planes(&both.planes, 15.0);
        assert_eq!(roles, PlaneRoles { ground: Some(0), wall: Some(1) });
    }

    #[test]
    fn crop_keeps_points_in_front_of_wall() {
        let wall = PlaneModel {
            normal: [0.0, 1.0, 0.0],
            offset: 0.0,
            inlier_indices: vec![],
            inlier_count: 0,
        };
        let c = PointCloud::from_points(
            [-0.5, 0.1, 1.0, 3.0].iter().map(|&y| Point3::new(0.0, y, 0.0)).collect(),
        )
        .unwrap();
        assert_eq!(crop_indices(&c, &wall, 2.0).unwrap(), [1, 2]);
        // orientation follows the centroid, not the stored sign
        assert_eq!(crop_indices(&c, &wall.flipped(), 2.0).unwrap(), [1, 2]);
        assert_eq!(crop_indices(&c, &wall, 100.0).unwrap(), [1, 2, 3]);
        assert!(crop_indices(&c, &wall, 0.0).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn removal_is_sound_and_monotone(seed in 0u64..1000) {
            let c = plane_with_clutter(seed);
            let params = RansacParams { seed, ..Default::default() };
            let out = remove_planes(&c, 2, &params).unwrap();
            proptest::prop_assert!(out.kept_indices.windows(2).all(|w| w[0] < w[1]));
            for plane in &out.planes {
                for &i in &plane.inlier_indices {
                    proptest::prop_assert!(plane.signed_distance(&c.points()[i]).abs() <= params.inlier_distance);
                }
            }
            proptest::prop_assert_eq!(out.remaining.points().to_vec(),
                out.kept_indices.iter().map(|&i| c.points()[i]).collect::<Vec<_>>());
        }
    }
}
