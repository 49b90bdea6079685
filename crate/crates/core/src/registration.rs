//! Rigid alignment of a campaign scan onto the reference scan.
//!
//! The objective is the mean squared residual between every current point
//! and its nearest reference point,
//!
//! ```text
//! E(R, T) = 1/N · Σ ‖ I_nn(i) − (R·C_i + T) ‖²
//! ```
//!
//! taken over the N current points whose nearest reference point lies within
//! the correspondence radius. [`icp`] minimises it by alternating nearest
//! neighbour correspondence with the closed-form SVD solution of
//! [`estimate_rigid_transform`].

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::index::SpatialIndex;
use crate::math;
use crate::{Error, Point3, PointCloud, Result};

/// `p ↦ R·p + T` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checks `RᵀR = I` and `det R = +1` to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = RigidTransform { rotation, translation };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner();
        RigidTransform { rotation, translation }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::param("transform", "non-finite entry"));
        }
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > 1e-9) {
            return Err(Error::param("transform", "rotation is not orthonormal"));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::param("transform", "rotation determinant is not +1"));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector() + self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        math::acos((self.rotation.trace() - 1.0) / 2.0)
    }

    /// `[R | T]` as 12 numbers, row-major.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_row_major(m: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let m = <[f64; 12]>::deserialize(d)?;
        RigidTransform::from_row_major(&m).map_err(serde::de::Error::custom)
    }
}

/// Closed-form least-squares rigid transform taking `source[i]` onto
/// `target[i]`: centroids, cross-covariance, SVD, and a reflection fix so
/// the result is a proper rotation.
pub fn estimate_rigid_transform(source: &[Point3], target: &[Point3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::param("target", "source and target lengths differ"));
    }
    if source.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    let n = source.len() as f64;
    let cs = source.iter().map(|p| p.to_vector()).sum::<Vector3<f64>>() / n;
    let ct = target.iter().map(|p| p.to_vector()).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s.to_vector() - cs;
        let dt = t.to_vector() - ct;
        h += ds * dt.transpose();
        spread += ds * ds.transpose();
    }
    let (values, _) = math::sorted_eigen(spread);
    if !(values[1] > 1e-12 * values[0]) || values[0] <= 0.0 {
        return Err(Error::Degenerate("source points are collinear"));
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD of the cross-covariance failed")),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = ct - rotation * cs;
    Ok(RigidTransform { rotation, translation })
}

/// Maps every point through `t`; colors and order are kept.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    let points = cloud.points().iter().map(|p| t.apply(p)).collect();
    PointCloud::from_parts(points, cloud.colors().map(<[_]>::to_vec))
}

/// Mean squared residual and the number of surviving pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentError {
    pub mse: f64,
    pub correspondence_count: usize,
}

struct Correspondences {
    error: AlignmentError,
    source: Vec<Point3>,
    target: Vec<Point3>,
}

fn correspond(
    reference: &PointCloud,
    index: &SpatialIndex,
    current: &PointCloud,
    t: &RigidTransform,
    max_distance: f64,
    keep_pairs: bool,
) -> Option<Correspondences> {
    let max_sq = if max_distance.is_finite() {
        max_distance * max_distance
    } else {
        f64::INFINITY
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut source = Vec::new();
    let mut target = Vec::new();
    for p in current.points() {
        let q = t.apply(p);
        let (j, d2) = index.nearest_squared(&q);
        if d2 > max_sq {
            continue;
        }
        sum += d2;
        count += 1;
        if keep_pairs {
            source.push(q);
            target.push(reference.points()[j]);
        }
    }
    (count > 0).then(|| Correspondences {
        error: AlignmentError {
            mse: sum / count as f64,
            correspondence_count: count,
        },
        source,
        target,
    })
}

/// Evaluates the alignment objective for `t`. Each current point is paired
/// with its nearest reference point; pairs farther than
/// `max_correspondence_distance` are discarded.
pub fn alignment_error(
    reference: &PointCloud,
    reference_index: &SpatialIndex,
    current: &PointCloud,
    t: &RigidTransform,
    max_correspondence_distance: f64,
) -> Result<AlignmentError> {
    if current.is_empty() || reference.is_empty() {
        return Err(Error::EmptyCloud);
    }
    correspond(reference, reference_index, current, t, max_correspondence_distance, false)
        .map(|c| c.error)
        .ok_or(Error::NoCorrespondences { iteration: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once `|e_k − e_{k−1}| / max(e_{k−1}, 1e-12)` drops below this.
    pub convergence_delta: f64,
    /// Correspondence rejection radius; `f64::INFINITY` disables rejection.
    pub max_correspondence_distance: f64,
    #[serde(skip)]
    pub initial: RigidTransform,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            convergence_delta: 1e-6,
            max_correspondence_distance: 1.0,
            initial: RigidTransform::identity(),
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(self.convergence_delta >= 0.0) {
            return Err(Error::param("convergence_delta", "must be non-negative"));
        }
        if !(self.max_correspondence_distance > 0.0) {
            return Err(Error::param("max_correspondence_distance", "must be positive"));
        }
        self.initial.validate()
    }
}

/// Translation moving the current centroid onto the reference centroid.
/// An opt-in initial guess for scans that are not roughly pre-aligned.
pub fn centroid_shift(reference: &PointCloud, current: &PointCloud) -> Result<RigidTransform> {
    let r = reference.centroid().ok_or(Error::EmptyCloud)?;
    let c = current.centroid().ok_or(Error::EmptyCloud)?;
    Ok(RigidTransform::from_translation(r - c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative error change fell below the convergence threshold.
    Converged,
    /// The last update would have increased the error; it was rejected.
    ErrorIncreased,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub mse: f64,
    /// Entry 0 is the error at the initial transform, entry k the error after
    /// the k-th accepted update.
    pub error_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub correspondence_count: usize,
}

/// Slack allowed on the monotone error sequence.
const MONOTONE_SLACK: f64 = 1e-12;

/// Point-to-point ICP aligning `current` onto `reference`.
///
/// Every iteration pairs each transformed current point with its nearest
/// reference point, solves the rigid transform over the surviving pairs and
/// composes it with the running estimate. An update that raises the error
/// is rejected and ends the run, so the error history never increases.
pub fn icp(reference: &PointCloud, current: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    let index = SpatialIndex::build(reference)?;
    icp_with_index(reference, &index, current, params)
}

/// [`icp`] with a prebuilt reference index.
pub fn icp_with_index(
    reference: &PointCloud,
    index: &SpatialIndex,
    current: &PointCloud,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    for cloud in [reference, current] {
        if cloud.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                got: cloud.len(),
            });
        }
    }
    let radius = params.max_correspondence_distance;
    let mut transform = params.initial;
    let mut pairs = correspond(reference, index, current, &transform, radius, true)
        .ok_or(Error::NoCorrespondences { iteration: 0 })?;
    let mut history = alloc::vec![pairs.error.mse];
    let mut stop_reason = StopReason::MaxIterations;
    let mut iterations = 0;
    for iteration in 1..=params.max_iterations {
        if pairs.error.mse == 0.0 {
            stop_reason = StopReason::Converged;
            break;
        }
        let step = estimate_rigid_transform(&pairs.source, &pairs.target)?;
        let candidate = step.compose(&transform);
        let next = correspond(reference, index, current, &candidate, radius, true)
            .ok_or(Error::NoCorrespondences { iteration })?;
        let previous = pairs.error.mse;
        if next.error.mse > previous + MONOTONE_SLACK {
            stop_reason = StopReason::ErrorIncreased;
            break;
        }
        transform = candidate;
        pairs = next;
        history.push(pairs.error.mse);
        iterations = iteration;
        let change = (pairs.error.mse - previous).abs() / previous.max(1e-12);
        if change < params.convergence_delta {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(IcpResult {
        transform,
        mse: pairs.error.mse,
        error_history: history,
        iterations,
        converged: stop_reason != StopReason::MaxIterations,
        stop_reason,
        correspondence_count: pairs.error.correspondence_count,
    })
}
