use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::index::SpatialIndex;
use crate::math;
use crate::{Error, PointCloud, Result};

/// Covariance-eigenvalue descriptors of a point's radius neighbourhood.
///
/// With `λ1 ≥ λ2 ≥ λ3`:
/// linearity `(λ1−λ2)/λ1`, planarity `(λ2−λ3)/λ1`, sphericity `λ3/λ1`.
/// Neighbourhoods below the minimum size get all-zero features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFeatures {
    pub eigenvalues: [f64; 3],
    pub linearity: f64,
    pub planarity: f64,
    pub sphericity: f64,
    /// Unit eigenvector of `λ1`, sign-normalised.
    pub principal_direction: Vector3<f64>,
    pub neighbor_count: usize,
}

impl ShapeFeatures {
    fn undefined(neighbor_count: usize) -> Self {
        ShapeFeatures {
            eigenvalues: [0.0; 3],
            linearity: 0.0,
            planarity: 0.0,
            sphericity: 0.0,
            principal_direction: Vector3::zeros(),
            neighbor_count,
        }
    }

    pub fn from_eigenvalues(mut eigenvalues: [f64; 3], principal_direction: Vector3<f64>, neighbor_count: usize) -> Self {
        for v in eigenvalues.iter_mut() {
            *v = v.max(0.0);
        }
        let [l1, l2, l3] = eigenvalues;
        if !(l1 > 0.0) {
            return ShapeFeatures::undefined(neighbor_count);
        }
        ShapeFeatures {
            eigenvalues,
            linearity: (l1 - l2) / l1,
            planarity: (l2 - l3) / l1,
            sphericity: l3 / l1,
            principal_direction,
            neighbor_count,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.eigenvalues[0] > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Linear,
    Planar,
    Spherical,
    Unclassified,
}

/// Population covariance of `indices`.
pub fn covariance(cloud: &PointCloud, indices: &[usize]) -> Matrix3<f64> {
    let pts = cloud.points();
    let n = indices.len() as f64;
    let mean = indices.iter().map(|&i| pts[i].to_vector()).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for &i in indices {
        let d = pts[i].to_vector() - mean;
        cov += d * d.transpose();
    }
    cov / n
}

/// Shape features for every point from its `radius` neighbourhood (the
/// point itself included).
pub fn shape_features(
    cloud: &PointCloud,
    index: &SpatialIndex,
    radius: f64,
    min_neighbors: usize,
) -> Result<Vec<ShapeFeatures>> {
    if !(radius > 0.0) {
        return Err(Error::param("feature_radius", "must be positive"));
    }
    if min_neighbors < 3 {
        return Err(Error::param("min_neighbors", "must be at least 3"));
    }
    let mut neighbors = Vec::new();
    Ok(cloud
        .points()
        .iter()
        .map(|p| {
            index.radius_neighbors_into(p, radius, &mut neighbors);
            if neighbors.len() < min_neighbors {
                return ShapeFeatures::undefined(neighbors.len());
            }
            let (values, vectors) = math::sorted_eigen(covariance(cloud, &neighbors));
            ShapeFeatures::from_eigenvalues(values, vectors[0], neighbors.len())
        })
        .collect())
}

/// Argmax of (linearity, planarity, sphericity); ties prefer Linear, then
/// Planar. Points without features are Unclassified.
pub fn classify_point(f: &ShapeFeatures) -> ShapeClass {
    if !f.is_defined() {
        ShapeClass::Unclassified
    } else if f.linearity >= f.planarity && f.linearity >= f.sphericity {
        ShapeClass::Linear
    } else if f.planarity >= f.sphericity {
        ShapeClass::Planar
    } else {
        ShapeClass::Spherical
    }
}

pub fn classify_points(features: &[ShapeFeatures]) -> Vec<ShapeClass> {
    features.iter().map(classify_point).collect()
}
