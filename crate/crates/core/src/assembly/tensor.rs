use nalgebra::Matrix3;

use crate::error::{FpmError, Result};
use crate::geometry::Point;

/// Fibre vectors this close to unit length are used as given.
const UNIT_TOL: f64 = 1e-8;
/// Fibre vectors within this distance of unit length are normalized with a warning.
const NORMALIZE_TOL: f64 = 1e-3;

/// D = d0[(1−ρ) f⊗f + ρI], with I the identity of the spatial dimension.
pub fn build_diffusion_tensor(dim: usize, fiber: &Point, d0: f64, rho: f64) -> Result<Matrix3<f64>> {
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(FpmError::Config(format!("d0 must be positive, got {d0}")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(FpmError::Config(format!("rho must lie in (0, 1], got {rho}")));
    }
    if dim == 2 && fiber.z != 0.0 {
        return Err(FpmError::Config("2D fibre has a z component".into()));
    }
    let f = unit_fiber(fiber)?;
    let mut eye = Matrix3::identity();
    if dim == 2 {
        eye[(2, 2)] = 0.0;
    }
    Ok(d0 * ((1.0 - rho) * f * f.transpose() + rho * eye))
}

fn unit_fiber(fiber: &Point) -> Result<Point> {
    let norm = fiber.norm();
    let dev = (norm - 1.0).abs();
    if dev <= UNIT_TOL {
        Ok(*fiber)
    } else if dev <= NORMALIZE_TOL {
        log::warn!("fibre vector has length {norm}; normalizing");
        Ok(fiber / norm)
    } else {
        Err(FpmError::Config(format!("fibre vector has length {norm}, expected 1")))
    }
}

/// Per-point diffusion tensors, piecewise constant over cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTensorField {
    pub dim: usize,
    pub d0: f64,
    pub rho: f64,
    pub fibers: Vec<Point>,
    pub tensors: Vec<Matrix3<f64>>,
}

impl DiffusionTensorField {
    pub fn from_fibers(dim: usize, fibers: Vec<Point>, d0: f64, rho: f64) -> Result<Self> {
        let tensors = fibers
            .iter()
            .map(|f| build_diffusion_tensor(dim, f, d0, rho))
            .collect::<Result<Vec<_>>>()?;
        let fibers = fibers.iter().map(unit_fiber).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            d0,
            rho,
            fibers,
            tensors,
        })
    }

    pub fn uniform(dim: usize, n: usize, fiber: Point, d0: f64, rho: f64) -> Result<Self> {
        Self::from_fibers(dim, vec![fiber; n], d0, rho)
    }

    /// Isotropic field D = d·I.
    pub fn isotropic(dim: usize, n: usize, d: f64) -> Result<Self> {
        Self::uniform(dim, n, Point::x(), d, 1.0)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Matrix3<f64> {
        &self.tensors[i]
    }

    /// Mean of the diagonal entries over the spatial dimension.
    pub fn mean_diagonal(&self, i: usize) -> f64 {
        let d = &self.tensors[i];
        (0..self.dim).map(|k| d[(k, k)]).sum::<f64>() / self.dim as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ventricular_2d_tensor() {
        let d = build_diffusion_tensor(2, &Point::x(), 0.0013, 0.15).unwrap();
        let expected = Matrix3::from_diagonal(&Point::new(0.0013, 0.000195, 0.0));
        assert_relative_eq!(d, expected, epsilon = 1e-18);
    }

    #[test]
    fn cuboid_3d_tensor() {
        let d = build_diffusion_tensor(3, &Point::z(), 0.00115, 0.12).unwrap();
        let expected = Matrix3::from_diagonal(&Point::new(0.000138, 0.000138, 0.00115));
        assert_relative_eq!(d, expected, epsilon = 1e-18);
    }

    #[test]
    fn isotropic_limit() {
        let f = Point::new(0.6, 0.8, 0.0);
        let d = build_diffusion_tensor(3, &f, 2.0, 1.0).unwrap();
        assert_relative_eq!(d, Matrix3::identity() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn eigenvalues_are_d0_and_d0_rho() {
        let f = Point::new(1.0, 2.0, -0.5).normalize();
        let d = build_diffusion_tensor(3, &f, 0.002, 0.3).unwrap();
        let mut ev: Vec<f64> = d.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], 0.0006, epsilon = 1e-15);
        assert_relative_eq!(ev[1], 0.0006, epsilon = 1e-15);
        assert_relative_eq!(ev[2], 0.002, epsilon = 1e-15);
    }

    #[test]
    fn fibre_length_handling() {
        assert!(build_diffusion_tensor(2, &Point::new(1.0005, 0.0, 0.0), 1.0, 0.5).is_ok());
        assert!(build_diffusion_tensor(2, &Point::new(1.1, 0.0, 0.0), 1.0, 0.5).is_err());
        assert!(build_diffusion_tensor(2, &Point::x(), 1.0, 1.5).is_err());
        assert!(build_diffusion_tensor(2, &Point::x(), 0.0, 0.5).is_err());
    }

    #[test]
    fn mean_diagonal_of_anisotropic_field() {
        let field = DiffusionTensorField::uniform(2, 3, Point::x(), 0.0013, 0.15).unwrap();
        assert_relative_eq!(field.mean_diagonal(1), 7.475e-4, epsilon = 1e-18);
    }
}
