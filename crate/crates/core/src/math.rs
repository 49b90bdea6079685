// Float helpers for no_std builds.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x.clamp(-1.0, 1.0))
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn to_radians(deg: f64) -> f64 {
    deg * core::f64::consts::PI / 180.0
}

#[inline]
pub fn to_degrees(rad: f64) -> f64 {
    rad * 180.0 / core::f64::consts::PI
}

/// Flips `v` so its largest-magnitude component is positive. Gives
/// eigenvectors and plane normals a reproducible sign.
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues sorted in
/// descending order with matching unit eigenvectors.
pub fn sorted_eigen(m: Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| {
        let v: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
        canonical_sign(v.normalize())
    });
    (values, vectors)
}

/// Angle between two unit directions with sign folded away, in radians.
#[cfg(test)]
pub fn axis_angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    acos(a.dot(b).abs())
}
