use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::local::{facet_blocks, point_capacity_matrix, point_diffusion_matrix, FacetBlocks};
use super::tensor::DiffusionTensorField;
use crate::error::{FpmError, Result};
use crate::geometry::CellPartition;
use crate::shape::ShapeFunction;
use crate::sparse::{CsrMatrix, SparsityPattern};

/// Facet penalty η = p · Σ 𝒱_i d̄_i / Σ 𝒱_i over (measure, mean diagonal) pairs.
pub fn weighted_eta(p: f64, measures_and_diagonals: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = measures_and_diagonals
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (v, dbar)| (n + v * dbar, d + v));
    p * num / den
}

/// η of the support of one point: the weighted mean runs over its m
/// neighbours (the centre itself is not part of the sum).
pub fn compute_eta(p: f64, neighbors: &[usize], partition: &CellPartition, tensors: &DiffusionTensorField) -> f64 {
    weighted_eta(
        p,
        neighbors
            .iter()
            .map(|&j| (partition.cell(j).measure, tensors.mean_diagonal(j))),
    )
}

/// Per-facet penalty parameters; zero on external facets.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyField {
    pub coefficient: f64,
    pub eta: Vec<f64>,
}

impl PenaltyField {
    /// Each internal facet takes η from the support of its E1 owner.
    pub fn build(p: f64, partition: &CellPartition, shapes: &[ShapeFunction], tensors: &DiffusionTensorField) -> Result<Self> {
        if !(p > 0.0) {
            return Err(FpmError::Config(format!("penalty coefficient must be positive, got {p}")));
        }
        let per_point: Vec<f64> = shapes
            .iter()
            .map(|sf| compute_eta(p, &sf.neighbors, partition, tensors))
            .collect();
        let eta = partition
            .facets()
            .iter()
            .map(|f| if f.is_internal() { per_point[f.e1()] } else { 0.0 })
            .collect();
        Ok(Self { coefficient: p, eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub penalty: f64,
    /// Replace C by its row-sum lumped diagonal.
    pub lumped_mass: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            lumped_mass: false,
        }
    }
}

/// Global capacity and diffusion matrices on a shared sparsity pattern.
#[derive(Debug, Clone)]
pub struct GlobalOperators {
    pub c: CsrMatrix,
    pub k: CsrMatrix,
    pub lumped: bool,
    pub penalty: PenaltyField,
}

impl GlobalOperators {
    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    /// 1ᵀ C V.
    pub fn content(&self, v: &[f64]) -> f64 {
        let cv = self.c.mul_vec(v);
        crate::sparse::dot(&cv, &vec![1.0; v.len()])
    }
}

const CHUNK: usize = 4096;

/// Assembles C from all C_E and K from all K_E plus every internal K_h.
///
/// Local matrices are computed in parallel chunks and scattered in a fixed
/// order, so the result is bit-identical regardless of thread count.
pub fn assemble_global(
    partition: &CellPartition,
    shapes: &[ShapeFunction],
    tensors: &DiffusionTensorField,
    options: &AssemblyOptions,
) -> Result<GlobalOperators> {
    let n = partition.len();
    if shapes.len() != n || tensors.len() != n {
        return Err(FpmError::Assembly(format!(
            "{} shape functions and {} tensors for {n} points",
            shapes.len(),
            tensors.len()
        )));
    }
    for (i, sf) in shapes.iter().enumerate() {
        if sf.center != i {
            return Err(FpmError::Assembly(format!("shape function {i} is centred at {}", sf.center)));
        }
        if let Some(&j) = sf.neighbors.iter().find(|&&j| j >= n) {
            return Err(FpmError::Assembly(format!("support of point {i} references point {j}")));
        }
    }
    let penalty = PenaltyField::build(options.penalty, partition, shapes, tensors)?;
    let locals: Vec<Vec<usize>> = shapes.iter().map(|sf| sf.local_indices().collect()).collect();
    let pattern = Arc::new(build_pattern(partition, &locals)?);

    let mut c = CsrMatrix::zeros(pattern.clone());
    let mut k = CsrMatrix::zeros(pattern);

    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let cell = partition.cell(i);
                (
                    point_capacity_matrix(cell, &shapes[i]),
                    point_diffusion_matrix(cell, &shapes[i], tensors.tensor(i)),
                )
            })
            .collect();
        for (i, (ce, ke)) in (start..end).zip(blocks) {
            scatter(&mut c, &locals[i], &locals[i], &ce)?;
            scatter(&mut k, &locals[i], &locals[i], &ke)?;
        }
    }

    let internal: Vec<usize> = partition.internal_facets().map(|(id, _)| id).collect();
    for chunk in internal.chunks(CHUNK) {
        let blocks: Vec<FacetBlocks> = chunk
            .par_iter()
            .map(|&id| {
                let f = &partition.facets()[id];
                let (a, b) = (f.e1(), f.e2().unwrap());
                let quad = partition.facet_quadrature(f);
                facet_blocks(f, &quad, &shapes[a], &shapes[b], tensors.tensor(a), tensors.tensor(b), penalty.eta[id])
            })
            .collect::<Result<_>>()?;
        for (&id, blk) in chunk.iter().zip(blocks) {
            let f = &partition.facets()[id];
            let (a, b) = (f.e1(), f.e2().unwrap());
            scatter(&mut k, &locals[a], &locals[a], &blk.b11)?;
            scatter(&mut k, &locals[a], &locals[b], &blk.b12)?;
            scatter(&mut k, &locals[b], &locals[a], &blk.b12.transpose())?;
            scatter(&mut k, &locals[b], &locals[b], &blk.b22)?;
        }
    }

    if options.lumped_mass {
        let sums = c.row_sums();
        if let Some(i) = sums.iter().position(|&s| !(s > 0.0)) {
            return Err(FpmError::Assembly(format!("lumped capacity of point {i} is not positive ({})", sums[i])));
        }
        let mut lumped = CsrMatrix::zeros(c.pattern().clone());
        for (i, s) in sums.into_iter().enumerate() {
            lumped.add(i, i, s)?;
        }
        c = lumped;
    }

    Ok(GlobalOperators {
        c,
        k,
        lumped: options.lumped_mass,
        penalty,
    })
}

fn scatter(m: &mut CsrMatrix, rows: &[usize], cols: &[usize], block: &DMatrix<f64>) -> Result<()> {
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            m.add(i, j, block[(a, b)])?;
        }
    }
    Ok(())
}

/// Row i couples to every index of each local set that contains i, where the
/// local sets are the cell supports and, per internal facet, both supports.
fn build_pattern(partition: &CellPartition, locals: &[Vec<usize>]) -> Result<SparsityPattern> {
    let n = partition.len();
    let mut member_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (c, l) in locals.iter().enumerate() {
        for &j in l {
            member_of[j].push(c);
        }
    }
    let rows: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cols = Vec::new();
            for &c in &member_of[i] {
                cols.extend_from_slice(&locals[c]);
                for &f in &partition.cell(c).facets {
                    let facet = &partition.facets()[f];
                    if let (a, Some(b)) = facet.cells {
                        let other = if a == c { b } else { a };
                        cols.extend_from_slice(&locals[other]);
                    }
                }
            }
            cols.sort_unstable();
            cols.dedup();
            cols
        })
        .collect();
    SparsityPattern::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_voxel_partition, Point};
    use crate::shape::build_shape_functions;
    use approx::assert_relative_eq;

    #[test]
    fn eta_examples() {
        assert_relative_eq!(weighted_eta(1.0, [(1.0, 1.0), (3.0, 2.0)]), 1.75);
        let part = build_voxel_partition(&[4, 4], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let iso = DiffusionTensorField::isotropic(2, 16, 0.0013).unwrap();
        assert_relative_eq!(compute_eta(1.0, &[1, 4], &part, &iso), 0.0013, epsilon = 1e-18);
        let aniso = DiffusionTensorField::uniform(2, 16, Point::x(), 0.0013, 0.15).unwrap();
        assert_relative_eq!(compute_eta(2.0, &[1, 4, 6], &part, &aniso), 1.495e-3, epsilon = 1e-17);
    }

    #[test]
    fn eta_is_independent_of_facet_measure() {
        // stretching the grid along y changes facet lengths but not η
        let a = build_voxel_partition(&[3, 3], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let b = build_voxel_partition(&[3, 3], &[0.1, 0.3], &[0.0, 0.0]).unwrap();
        let t = DiffusionTensorField::isotropic(2, 9, 0.5).unwrap();
        let pa = PenaltyField::build(1.5, &a, &build_shape_functions(&a).unwrap(), &t).unwrap();
        let pb = PenaltyField::build(1.5, &b, &build_shape_functions(&b).unwrap(), &t).unwrap();
        for (x, y) in pa.eta.iter().zip(&pb.eta) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
        assert!(PenaltyField::build(0.0, &a, &build_shape_functions(&a).unwrap(), &t).is_err());
    }

    #[test]
    fn small_grid_invariants() {
        let part = build_voxel_partition(&[2, 2], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let sfs = build_shape_functions(&part).unwrap();
        let t = DiffusionTensorField::isotropic(2, 4, 1.0).unwrap();
        let ops = assemble_global(&part, &sfs, &t, &AssemblyOptions::default()).unwrap();
        let kn = ops.k.norm_inf();
        assert!(ops.k.asymmetry_inf() <= 1e-12 * kn);
        let k1 = ops.k.mul_vec(&[1.0; 4]);
        assert!(k1.iter().all(|v| v.abs() <= 1e-10 * kn));
        let eig = ops.k.to_dense().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-12 * kn);
        assert_relative_eq!(ops.content(&[1.0; 4]), 0.04, epsilon = 1e-15);
    }

    #[test]
    fn lumped_mass_is_diagonal() {
        let part = build_voxel_partition(&[3, 3], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let sfs = build_shape_functions(&part).unwrap();
        let t = DiffusionTensorField::isotropic(2, 9, 1.0).unwrap();
        let ops = assemble_global(
            &part,
            &sfs,
            &t,
            &AssemblyOptions {
                penalty: 1.0,
                lumped_mass: true,
            },
        )
        .unwrap();
        let dense = ops.c.to_dense();
        assert_relative_eq!(dense.sum(), 0.09, epsilon = 1e-15);
        assert_eq!(dense.clone() - DMatrix::from_diagonal(&dense.diagonal()), DMatrix::zeros(9, 9));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let part = build_voxel_partition(&[2, 2], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let mut sfs = build_shape_functions(&part).unwrap();
        let t = DiffusionTensorField::isotropic(2, 4, 1.0).unwrap();
        sfs[1].neighbors[0] = 17;
        assert!(matches!(
            assemble_global(&part, &sfs, &t, &AssemblyOptions::default()),
            Err(FpmError::Assembly(_))
        ));
    }
}
