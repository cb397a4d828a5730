//! Point clouds and conforming cell partitions.
//!
//! Every point owns exactly one cell. Cells are bounded by facets; an internal
//! facet is shared by two cells, an external facet lies on the domain boundary.
//! Coordinates are stored as 3-vectors in cm; in 2D the third component is zero.

mod format;
mod partition;
mod support;
mod voronoi;
mod voxel;

pub use format::{format_partition, read_partition, read_points, write_partition, PARTITION_MAGIC};
pub use partition::{Cell, CellPartition, CellShape, Facet, FacetKind, FacetSpec, MeasureReport};
pub use support::{first_ring_support, SupportDomain, MAX_RING_DEPTH};
pub use voronoi::{build_voronoi_partition_2d, BoundaryPolygon};
pub use voxel::build_voxel_partition;

use nalgebra::Vector3;

use crate::error::{FpmError, Result};

/// Coordinate vector in cm. The z component is zero for 2D geometry.
pub type Point = Vector3<f64>;

/// Points closer than this (cm) are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// A set of distinct points in 2D or 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    positions: Vec<Point>,
}

impl PointCloud {
    pub fn new(dim: usize, positions: Vec<Point>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(FpmError::Contract(format!("dimension must be 2 or 3, got {dim}")));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(FpmError::Domain(format!("point {i} has a non-finite coordinate")));
            }
            if dim == 2 && p.z != 0.0 {
                return Err(FpmError::Contract(format!("point {i} has a z coordinate in a 2D cloud")));
            }
        }
        if let Some((a, b)) = find_coincident(&positions) {
            return Err(FpmError::DegenerateCell {
                point: b,
                reason: format!("coincides with point {a}"),
            });
        }
        Ok(Self { dim, positions })
    }

    /// Builds a cloud from coordinate tuples; every tuple must have `dim` entries.
    pub fn from_coords(dim: usize, coords: &[Vec<f64>]) -> Result<Self> {
        let mut positions = Vec::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            if c.len() != dim {
                return Err(FpmError::Contract(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    c.len()
                )));
            }
            positions.push(Point::new(c[0], c[1], if dim == 3 { c[2] } else { 0.0 }));
        }
        Self::new(dim, positions)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &Point {
        &self.positions[i]
    }

    /// Index of the point closest to `x` (lowest index on ties).
    pub fn nearest(&self, x: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.positions.iter().enumerate() {
            let d = (p - x).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

fn find_coincident(positions: &[Point]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if positions[j].x - positions[i].x > COINCIDENCE_TOL {
                break;
            }
            if (positions[j] - positions[i]).norm() <= COINCIDENCE_TOL {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}
