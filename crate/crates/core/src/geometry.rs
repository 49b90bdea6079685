//! Points and boxes.

use core::ops::{Add, Mul, Sub};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::math;

/// A point in meters. Clouds only ever hold finite points; see
/// [`PointCloud::new`](crate::PointCloud::new).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Squared Euclidean distance. Every exact-distance comparison in the
    /// crate goes through this expression so that results are reproducible
    /// by an independent scan.
    #[inline]
    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        math::sqrt(self.distance_squared(other))
    }

    /// Lexicographic comparison on (x, y, z).
    pub fn lex_cmp(&self, other: &Point3) -> core::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add<Vector3<f64>> for Point3 {
    type Output = Point3;
    fn add(self, v: Vector3<f64>) -> Point3 {
        Point3::new(self.x + v.x, self.y + v.y, self.z + v.z)
    }
}

impl Sub for Point3 {
    type Output = Vector3<f64>;
    fn sub(self, o: Point3) -> Vector3<f64> {
        Vector3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Mean of a non-empty set of points.
pub fn centroid<'a, I>(points: I) -> Option<Point3>
where
    I: IntoIterator<Item = &'a Point3>,
{
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p.to_vector();
        n += 1;
    }
    (n > 0).then(|| Point3::from_vector(&(sum / n as f64)))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_corner: Point3,
    pub max_corner: Point3,
    pub diagonal: f64,
}

impl Aabb {
    pub fn from_corners(min_corner: Point3, max_corner: Point3) -> Self {
        Aabb {
            min_corner,
            max_corner,
            diagonal: min_corner.distance(&max_corner),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max_corner - self.min_corner
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min_corner.x
            && p.y >= self.min_corner.y
            && p.z >= self.min_corner.z
            && p.x <= self.max_corner.x
            && p.y <= self.max_corner.y
            && p.z <= self.max_corner.z
    }
}
