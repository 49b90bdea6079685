//! Static KD-tree over a point cloud.
//!
//! Queries are exact: every result is identical to an exhaustive scan using
//! [`Point3::distance_squared`], with ties in distance resolved towards the
//! lower original point index.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Point3, PointCloud, Result};

const LEAF_SIZE: usize = 16;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: u32,
    end: u32,
    dim: u8,
    split: f64,
    left: u32,
    right: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }
}

/// Immutable nearest-neighbour index. Results refer to indices of the cloud
/// the index was built from.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    // points in tree order, ids[i] is the source index of points[i]
    points: Vec<Point3>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

/// A neighbour returned by [`SpatialIndex::k_nearest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance_squared: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        crate::math::sqrt(self.distance_squared)
    }
}

// Max-heap entry ordered by (distance, index).
#[derive(PartialEq)]
struct HeapEntry(f64, u32);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[inline]
fn coord(p: &Point3, dim: u8) -> f64 {
    match dim {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

#[inline]
fn better(d2: f64, id: u32, best_d2: f64, best_id: u32) -> bool {
    d2 < best_d2 || (d2 == best_d2 && id < best_id)
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.len() >= u32::MAX as usize {
            return Err(Error::param("cloud", "too many points for the index"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(points, &mut order, 0, &mut nodes);
        let tree_points = order.iter().map(|&i| points[i as usize]).collect();
        Ok(SpatialIndex {
            points: tree_points,
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest indexed point to `query` as `(index, distance)`.
    pub fn nearest(&self, query: &Point3) -> (usize, f64) {
        let (i, d2) = self.nearest_squared(query);
        (i, crate::math::sqrt(d2))
    }

    /// Nearest indexed point to `query` as `(index, squared distance)`.
    pub fn nearest_squared(&self, query: &Point3) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        let mut stack: [u32; 64] = [0; 64];
        let mut far: [f64; 64] = [0.0; 64];
        let mut top = 1usize;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if far[top] > best.0 {
                continue;
            }
            if node.is_leaf() {
                for k in node.start as usize..node.end as usize {
                    let d2 = self.points[k].distance_squared(query);
                    if better(d2, self.ids[k], best.0, best.1) {
                        best = (d2, self.ids[k]);
                    }
                }
                continue;
            }
            let diff = coord(query, node.dim) - node.split;
            let (near, other) = if diff <= 0.0 {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            // the far side is pushed first so that the near side is visited first
            stack[top] = other;
            far[top] = diff * diff;
            stack[top + 1] = near;
            far[top + 1] = 0.0;
            top += 2;
        }
        (best.1 as usize, best.0)
    }

    /// The `k` nearest indexed points sorted by (distance, index).
    pub fn k_nearest(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        self.k_nearest_rec(0, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap
            .into_iter()
            .map(|HeapEntry(d2, id)| Neighbor {
                index: id as usize,
                distance_squared: d2,
            })
            .collect();
        out.sort_by(|a, b| {
            a.distance_squared
                .total_cmp(&b.distance_squared)
                .then(a.index.cmp(&b.index))
        });
        out
    }

    fn k_nearest_rec(&self, node: u32, q: &Point3, k: usize, heap: &mut BinaryHeap<HeapEntry>) {
        let node = &self.nodes[node as usize];
        if node.is_leaf() {
            for i in node.start as usize..node.end as usize {
                let entry = HeapEntry(self.points[i].distance_squared(q), self.ids[i]);
                if heap.len() < k {
                    heap.push(entry);
                } else if entry < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(entry);
                }
            }
            return;
        }
        let diff = coord(q, node.dim) - node.split;
        let (near, other) = if diff <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.k_nearest_rec(near, q, k, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
            self.k_nearest_rec(other, q, k, heap);
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn radius_neighbors(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_neighbors_into(query, radius, &mut out);
        out
    }

    /// Like [`radius_neighbors`](Self::radius_neighbors) but reuses `out`.
    pub fn radius_neighbors_into(&self, query: &Point3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.is_leaf() {
                for k in node.start as usize..node.end as usize {
                    if self.points[k].distance_squared(query) <= r2 {
                        out.push(self.ids[k] as usize);
                    }
                }
                continue;
            }
            let diff = coord(query, node.dim) - node.split;
            if diff <= 0.0 || diff * diff <= r2 {
                stack.push(node.left);
            }
            if diff >= 0.0 || diff * diff <= r2 {
                stack.push(node.right);
            }
        }
        out.sort_unstable();
    }

    /// Number of points within `radius` (inclusive).
    pub fn count_within(&self, query: &Point3, radius: f64) -> usize {
        let r2 = radius * radius;
        let mut count = 0;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.is_leaf() {
                count += self.points[node.start as usize..node.end as usize]
                    .iter()
                    .filter(|p| p.distance_squared(query) <= r2)
                    .count();
                continue;
            }
            let diff = coord(query, node.dim) - node.split;
            if diff <= 0.0 || diff * diff <= r2 {
                stack.push(node.left);
            }
            if diff >= 0.0 || diff * diff <= r2 {
                stack.push(node.right);
            }
        }
        count
    }
}

fn build_node(points: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    let leaf = Node {
        start: offset as u32,
        end: (offset + order.len()) as u32,
        dim: 0,
        split: 0.0,
        left: NO_CHILD,
        right: NO_CHILD,
    };
    if order.len() <= LEAF_SIZE {
        nodes.push(leaf);
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize].to_array();
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mut dim = 0u8;
    for d in 1..3u8 {
        if hi[d as usize] - lo[d as usize] > hi[dim as usize] - lo[dim as usize] {
            dim = d;
        }
    }
    if hi[dim as usize] - lo[dim as usize] <= 0.0 {
        // all points coincide
        nodes.push(leaf);
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coord(&points[a as usize], dim)
            .total_cmp(&coord(&points[b as usize], dim))
            .then(a.cmp(&b))
    });
    let split = coord(&points[order[mid] as usize], dim);
    nodes.push(Node {
        dim,
        split,
        ..leaf
    });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(points, left_part, offset, nodes);
    let right = build_node(points, right_part, offset + mid, nodes);
    let node = &mut nodes[id as usize];
    node.left = left;
    node.right = right;
    id
}
