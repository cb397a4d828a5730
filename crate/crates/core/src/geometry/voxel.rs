use super::{CellPartition, CellShape, FacetSpec, Point, PointCloud};
use crate::error::{FpmError, Result};

/// Regular grid of square (2D) or cubic (3D) voxels with one point at each
/// voxel centre. Point index runs x fastest, then y, then z.
pub fn build_voxel_partition(counts: &[usize], spacing: &[f64], origin: &[f64]) -> Result<CellPartition> {
    let dim = counts.len();
    if dim != 2 && dim != 3 {
        return Err(FpmError::Config(format!("voxel grid needs 2 or 3 axes, got {dim}")));
    }
    if spacing.len() != dim || origin.len() != dim {
        return Err(FpmError::Config("counts, spacing and origin must have the same length".into()));
    }
    if let Some(c) = counts.iter().find(|&&c| c < 2) {
        return Err(FpmError::Config(format!("voxel count {c} per axis is below 2")));
    }
    if let Some(h) = spacing.iter().find(|&&h| !(h > 0.0) || !h.is_finite()) {
        return Err(FpmError::Config(format!("voxel spacing must be positive, got {h}")));
    }

    let n3 = [counts[0], counts[1], if dim == 3 { counts[2] } else { 1 }];
    let h3 = [spacing[0], spacing[1], if dim == 3 { spacing[2] } else { 0.0 }];
    let o3 = [origin[0], origin[1], if dim == 3 { origin[2] } else { 0.0 }];
    let cell_id = |i: usize, j: usize, k: usize| i + n3[0] * (j + n3[1] * k);

    let mut positions = Vec::with_capacity(n3[0] * n3[1] * n3[2]);
    for k in 0..n3[2] {
        for j in 0..n3[1] {
            for i in 0..n3[0] {
                let z = if dim == 3 { o3[2] + (k as f64 + 0.5) * h3[2] } else { 0.0 };
                positions.push(Point::new(
                    o3[0] + (i as f64 + 0.5) * h3[0],
                    o3[1] + (j as f64 + 0.5) * h3[1],
                    z,
                ));
            }
        }
    }
    let cloud = PointCloud::new(dim, positions)?;

    let vk = if dim == 3 { n3[2] + 1 } else { 1 };
    let (vx, vy) = (n3[0] + 1, n3[1] + 1);
    let vid = |i: usize, j: usize, k: usize| i + vx * (j + vy * k);
    let mut vertices = Vec::with_capacity(vx * vy * vk);
    for k in 0..vk {
        for j in 0..vy {
            for i in 0..vx {
                vertices.push(Point::new(
                    o3[0] + i as f64 * h3[0],
                    o3[1] + j as f64 * h3[1],
                    if dim == 3 { o3[2] + k as f64 * h3[2] } else { 0.0 },
                ));
            }
        }
    }

    let mut shapes = Vec::with_capacity(cloud.len());
    let mut specs = Vec::new();
    if dim == 2 {
        for j in 0..n3[1] {
            for i in 0..n3[0] {
                shapes.push(CellShape::Polygon(vec![
                    vid(i, j, 0),
                    vid(i + 1, j, 0),
                    vid(i + 1, j + 1, 0),
                    vid(i, j + 1, 0),
                ]));
            }
        }
        // faces normal to x: the line x = i
        for j in 0..n3[1] {
            for i in 0..=n3[0] {
                let cells = face_cells(i, n3[0], |a| cell_id(a, j, 0));
                specs.push(FacetSpec {
                    cells,
                    vertices: vec![vid(i, j, 0), vid(i, j + 1, 0)],
                });
            }
        }
        for j in 0..=n3[1] {
            for i in 0..n3[0] {
                let cells = face_cells(j, n3[1], |b| cell_id(i, b, 0));
                specs.push(FacetSpec {
                    cells,
                    vertices: vec![vid(i, j, 0), vid(i + 1, j, 0)],
                });
            }
        }
    } else {
        for k in 0..n3[2] {
            for j in 0..n3[1] {
                for i in 0..n3[0] {
                    let c = |a: usize, b: usize, d: usize| vid(i + a, j + b, k + d);
                    shapes.push(CellShape::Polyhedron(vec![
                        vec![c(0, 0, 0), c(0, 1, 0), c(0, 1, 1), c(0, 0, 1)],
                        vec![c(1, 0, 0), c(1, 0, 1), c(1, 1, 1), c(1, 1, 0)],
                        vec![c(0, 0, 0), c(0, 0, 1), c(1, 0, 1), c(1, 0, 0)],
                        vec![c(0, 1, 0), c(1, 1, 0), c(1, 1, 1), c(0, 1, 1)],
                        vec![c(0, 0, 0), c(1, 0, 0), c(1, 1, 0), c(0, 1, 0)],
                        vec![c(0, 0, 1), c(0, 1, 1), c(1, 1, 1), c(1, 0, 1)],
                    ]));
                }
            }
        }
        for k in 0..n3[2] {
            for j in 0..n3[1] {
                for i in 0..=n3[0] {
                    specs.push(FacetSpec {
                        cells: face_cells(i, n3[0], |a| cell_id(a, j, k)),
                        vertices: vec![vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1)],
                    });
                }
            }
        }
        for k in 0..n3[2] {
            for j in 0..=n3[1] {
                for i in 0..n3[0] {
                    specs.push(FacetSpec {
                        cells: face_cells(j, n3[1], |b| cell_id(i, b, k)),
                        vertices: vec![vid(i, j, k), vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j, k)],
                    });
                }
            }
        }
        for k in 0..=n3[2] {
            for j in 0..n3[1] {
                for i in 0..n3[0] {
                    specs.push(FacetSpec {
                        cells: face_cells(k, n3[2], |d| cell_id(i, j, d)),
                        vertices: vec![vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k)],
                    });
                }
            }
        }
    }

    CellPartition::from_parts(cloud, vertices, shapes, specs)
}

/// Cells on either side of grid plane `plane` along an axis with `count` voxels.
fn face_cells(plane: usize, count: usize, id: impl Fn(usize) -> usize) -> (usize, Option<usize>) {
    if plane == 0 {
        (id(0), None)
    } else if plane == count {
        (id(count - 1), None)
    } else {
        (id(plane - 1), Some(id(plane)))
    }
}
