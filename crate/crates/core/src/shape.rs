//! Generalized finite difference gradients and affine shape rows.
//!
//! For a point `x0` with support neighbours `x1..xm`, the gradient of the
//! local trial function is `B · V_E` with `V_E = [V0, V1, …, Vm]` and
//! `B = (AᵀWA)⁻¹AᵀW [−1 | I]`, where the rows of `A` are `xi − x0`.
//! The shape row at `x` is `N(x) = (x − x0)ᵀB + [1, 0, …, 0]`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, RowDVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{FpmError, Result};
use crate::geometry::{first_ring_support, CellPartition, Point};

/// Supports whose normal matrix is worse conditioned than this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Least-squares weight for each neighbour. Constant weights are the default.
pub trait WeightFunction: Sync {
    fn weight(&self, offset: &Point) -> f64;
}

/// w ≡ 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantWeight;

impl WeightFunction for ConstantWeight {
    fn weight(&self, _offset: &Point) -> f64 {
        1.0
    }
}

fn normal_matrix(dim: usize, x0: &Point, coords: &[Point], weights: &dyn WeightFunction) -> DMatrix<f64> {
    let mut ata = DMatrix::zeros(dim, dim);
    for x in coords {
        let d = x - x0;
        let w = weights.weight(&d);
        for r in 0..dim {
            for c in 0..dim {
                ata[(r, c)] += w * d[r] * d[c];
            }
        }
    }
    ata
}

fn condition_of(ata: DMatrix<f64>) -> (f64, SymmetricEigen<f64, nalgebra::Dyn>) {
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 && max.is_finite() { max / min } else { f64::INFINITY };
    (cond, eig)
}

/// Condition number of AᵀA for the given support (infinite when singular).
pub fn support_condition(dim: usize, x0: &Point, coords: &[Point]) -> f64 {
    if coords.len() < dim {
        return f64::INFINITY;
    }
    condition_of(normal_matrix(dim, x0, coords, &ConstantWeight)).0
}

/// Gradient matrix B (dim × (m+1), padded to three rows) for a support.
pub fn build_gfd_matrix(dim: usize, x0: &Point, neighbor_coords: &[Point]) -> Result<Matrix3xX<f64>> {
    build_gfd_matrix_weighted(dim, x0, neighbor_coords, &ConstantWeight)
}

pub fn build_gfd_matrix_weighted(
    dim: usize,
    x0: &Point,
    neighbor_coords: &[Point],
    weights: &dyn WeightFunction,
) -> Result<Matrix3xX<f64>> {
    let m = neighbor_coords.len();
    if m < dim {
        return Err(FpmError::DegenerateSupport(format!("{m} neighbours for a {dim}D gradient")));
    }
    let (cond, eig) = condition_of(normal_matrix(dim, x0, neighbor_coords, weights));
    if !(cond <= CONDITION_LIMIT) {
        return Err(FpmError::DegenerateSupport(format!("normal matrix condition number {cond:e}")));
    }
    let mut inv = eig.eigenvectors.clone();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        inv.column_mut(k).scale_mut(1.0 / lambda);
    }
    let inv = inv * eig.eigenvectors.transpose();

    let mut b = Matrix3xX::zeros(m + 1);
    for (j, x) in neighbor_coords.iter().enumerate() {
        let d = x - x0;
        let w = weights.weight(&d);
        for r in 0..dim {
            let v: f64 = (0..dim).map(|c| inv[(r, c)] * d[c]).sum::<f64>() * w;
            b[(r, j + 1)] = v;
            b[(r, 0)] -= v;
        }
    }
    Ok(b)
}

/// Local trial function of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunction {
    pub center: usize,
    pub neighbors: Vec<usize>,
    pub x0: Point,
    /// Gradient matrix; rows beyond the spatial dimension are zero.
    pub b: Matrix3xX<f64>,
}

impl ShapeFunction {
    pub fn new(center: usize, neighbors: Vec<usize>, dim: usize, x0: Point, neighbor_coords: &[Point]) -> Result<Self> {
        let b = build_gfd_matrix(dim, &x0, neighbor_coords)?;
        Ok(Self {
            center,
            neighbors,
            x0,
            b,
        })
    }

    /// Number of local values, m + 1.
    pub fn len(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.b.ncols() == 0
    }

    /// Global indices in local order: the centre, then the neighbours.
    pub fn local_indices(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.center).chain(self.neighbors.iter().copied())
    }

    /// N(x) = (x − x0)ᵀB + e₀.
    pub fn eval_shape(&self, x: &Point) -> RowDVector<f64> {
        let d = x - self.x0;
        let mut n = d.transpose() * &self.b;
        n[0] += 1.0;
        n
    }

    /// ∇V = B · V_E; constant over the cell.
    pub fn eval_gradient(&self, values: &[f64]) -> Result<Point> {
        if values.len() != self.len() {
            return Err(FpmError::Contract(format!(
                "expected {} local values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(&self.b * DVector::from_column_slice(values))
    }

    /// Value of the local trial function at `x` for local values `V_E`.
    pub fn eval_value(&self, x: &Point, values: &[f64]) -> Result<f64> {
        let g = self.eval_gradient(values)?;
        Ok(values[0] + (x - self.x0).dot(&g))
    }

    /// BᵀDB, the integrand of the point diffusion matrix.
    pub fn gradient_energy(&self, d: &Matrix3<f64>) -> DMatrix<f64> {
        self.b.transpose() * d * &self.b
    }
}

/// Shape functions of every point of a partition, one support per point.
pub fn build_shape_functions(partition: &CellPartition) -> Result<Vec<ShapeFunction>> {
    let dim = partition.dim();
    let points = partition.points();
    (0..partition.len())
        .into_par_iter()
        .map(|i| {
            let support = first_ring_support(partition, i)?;
            let coords: Vec<Point> = support.neighbors.iter().map(|&j| points[j]).collect();
            ShapeFunction::new(i, support.neighbors, dim, points[i], &coords)
        })
        .collect()
}
