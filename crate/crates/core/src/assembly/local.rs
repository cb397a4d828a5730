//! Point and internal-boundary matrices of a single cell or facet.

use nalgebra::{DMatrix, Matrix3, RowDVector};

use crate::error::{FpmError, Result};
use crate::geometry::{Cell, CellPartition, Facet, Point};
use crate::shape::ShapeFunction;

/// C_E = ∫_E NᵀN dΩ, exact.
///
/// With N(x) = e₀ + (x−x0)ᵀB the integrand is quadratic, so the cell's zeroth,
/// first and second moments about x0 integrate it exactly.
pub fn point_capacity_matrix(cell: &Cell, sf: &ShapeFunction) -> DMatrix<f64> {
    let len = sf.len();
    let first = cell.measure * (cell.centroid - sf.x0);
    let second = cell.second_moment_about(&sf.x0);
    let mb = first.transpose() * &sf.b; // ∫(x−x0)ᵀ dΩ · B
    let mut c = sf.b.transpose() * second * &sf.b;
    c[(0, 0)] += cell.measure;
    for j in 0..len {
        c[(0, j)] += mb[j];
        c[(j, 0)] += mb[j];
    }
    c
}

/// K_E = |E|·BᵀDB, exact because B is constant over the cell.
pub fn point_diffusion_matrix(cell: &Cell, sf: &ShapeFunction, d: &Matrix3<f64>) -> DMatrix<f64> {
    sf.gradient_energy(d) * cell.measure
}

/// The three distinct blocks of a facet matrix: (E1,E1), (E1,E2), (E2,E2).
/// The (E2,E1) block is the transpose of (E1,E2).
#[derive(Debug, Clone, PartialEq)]
pub struct FacetBlocks {
    pub b11: DMatrix<f64>,
    pub b12: DMatrix<f64>,
    pub b22: DMatrix<f64>,
}

/// Facet matrix over the union of both supports, with its global indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetBlock {
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// Interior-penalty flux matrix of one internal facet.
///
/// Consistency and symmetrization terms have affine integrands and use the
/// facet centroid; penalty terms are quadratic and use `quad`.
pub fn facet_blocks(
    facet: &Facet,
    quad: &[(Point, f64)],
    sf1: &ShapeFunction,
    sf2: &ShapeFunction,
    d1: &Matrix3<f64>,
    d2: &Matrix3<f64>,
    eta: f64,
) -> Result<FacetBlocks> {
    if !facet.is_internal() {
        return Err(FpmError::Contract("external facets carry no flux matrix".into()));
    }
    if facet.e1() != sf1.center || facet.e2() != Some(sf2.center) {
        return Err(FpmError::Contract("shape functions do not match the facet cells".into()));
    }
    let n1 = facet.normal;
    let len = facet.measure;
    let xc = facet.centroid;

    let nc1 = sf1.eval_shape(&xc);
    let nc2 = sf2.eval_shape(&xc);
    // flux rows nᵀDB, each with n pointing out of its own cell
    let g1: RowDVector<f64> = (n1.transpose() * d1) * &sf1.b;
    let g2: RowDVector<f64> = (-n1.transpose() * d2) * &sf2.b;

    let mut b11 = -0.5 * len * (nc1.transpose() * &g1 + g1.transpose() * &nc1);
    let mut b22 = -0.5 * len * (nc2.transpose() * &g2 + g2.transpose() * &nc2);
    let mut b12 = 0.5 * len * (nc1.transpose() * &g2 + g1.transpose() * &nc2);

    let scale = eta / facet.h_e;
    for (x, w) in quad {
        let s1 = sf1.eval_shape(x);
        let s2 = sf2.eval_shape(x);
        let sw = scale * w;
        b11 += sw * s1.transpose() * &s1;
        b22 += sw * s2.transpose() * &s2;
        b12 -= sw * s1.transpose() * &s2;
    }
    Ok(FacetBlocks { b11, b12, b22 })
}

/// K_h of an internal facet as one dense block over the union of both supports.
pub fn internal_boundary_matrix(
    partition: &CellPartition,
    facet: &Facet,
    sf1: &ShapeFunction,
    sf2: &ShapeFunction,
    d1: &Matrix3<f64>,
    d2: &Matrix3<f64>,
    eta: f64,
) -> Result<FacetBlock> {
    let quad = partition.facet_quadrature(facet);
    let blocks = facet_blocks(facet, &quad, sf1, sf2, d1, d2, eta)?;
    let l1: Vec<usize> = sf1.local_indices().collect();
    let l2: Vec<usize> = sf2.local_indices().collect();
    let mut indices: Vec<usize> = l1.iter().chain(&l2).copied().collect();
    indices.sort_unstable();
    indices.dedup();
    let pos = |g: usize| indices.binary_search(&g).unwrap();
    let mut matrix = DMatrix::zeros(indices.len(), indices.len());
    for (a, &ga) in l1.iter().enumerate() {
        for (b, &gb) in l1.iter().enumerate() {
            matrix[(pos(ga), pos(gb))] += blocks.b11[(a, b)];
        }
        for (b, &gb) in l2.iter().enumerate() {
            matrix[(pos(ga), pos(gb))] += blocks.b12[(a, b)];
            matrix[(pos(gb), pos(ga))] += blocks.b12[(a, b)];
        }
    }
    for (a, &ga) in l2.iter().enumerate() {
        for (b, &gb) in l2.iter().enumerate() {
            matrix[(pos(ga), pos(gb))] += blocks.b22[(a, b)];
        }
    }
    Ok(FacetBlock { indices, matrix })
}
