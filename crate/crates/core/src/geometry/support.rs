use super::{CellPartition, Point};
use crate::error::{FpmError, Result};
use crate::shape::{support_condition, CONDITION_LIMIT};

/// Deepest ring searched before a support is declared degenerate.
pub const MAX_RING_DEPTH: usize = 3;

/// Neighbour set used to reconstruct the gradient at `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportDomain {
    pub center: usize,
    /// Ring-1 neighbours ascending, then each further ring ascending.
    pub neighbors: Vec<usize>,
    pub ring_depth: usize,
}

/// Support of `center`: owners of the cells adjacent to its cell, grown by
/// further rings until the least-squares normal matrix has full rank.
pub fn first_ring_support(partition: &CellPartition, center: usize) -> Result<SupportDomain> {
    let n = partition.len();
    if center >= n {
        return Err(FpmError::Contract(format!("point {center} out of range")));
    }
    let dim = partition.dim();
    let points = partition.points();
    let mut visited = vec![false; n];
    visited[center] = true;
    let mut frontier = vec![center];
    let mut neighbors = Vec::new();
    for depth in 1..=MAX_RING_DEPTH {
        let mut ring = Vec::new();
        for &c in &frontier {
            for &a in partition.adjacent(c) {
                if !visited[a] {
                    visited[a] = true;
                    ring.push(a);
                }
            }
        }
        ring.sort_unstable();
        neighbors.extend_from_slice(&ring);
        frontier = ring;
        if neighbors.len() >= dim {
            let coords: Vec<Point> = neighbors.iter().map(|&j| points[j]).collect();
            if support_condition(dim, &points[center], &coords) <= CONDITION_LIMIT {
                return Ok(SupportDomain {
                    center,
                    neighbors,
                    ring_depth: depth,
                });
            }
        }
        if frontier.is_empty() {
            break;
        }
    }
    Err(FpmError::DegenerateGeometry {
        point: center,
        depth: MAX_RING_DEPTH,
    })
}
