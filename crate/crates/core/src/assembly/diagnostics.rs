use nalgebra::SymmetricEigen;

use super::GlobalOperators;
use crate::sparse::{dot, CsrMatrix};

/// Above this size the smallest eigenvalue is estimated iteratively.
pub const DENSE_EIGEN_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorDiagnostics {
    pub n: usize,
    pub nnz: usize,
    pub k_norm_inf: f64,
    pub k_asymmetry_inf: f64,
    /// ‖K·1‖∞
    pub k_null_residual_inf: f64,
    pub c_asymmetry_inf: f64,
    pub k_min_eigenvalue: f64,
    /// Whether the eigenvalue came from a dense decomposition.
    pub eigenvalue_exact: bool,
}

impl OperatorDiagnostics {
    pub fn compute(ops: &GlobalOperators) -> Self {
        let k = &ops.k;
        let n = k.nrows();
        let ones = vec![1.0; n];
        let null_res = k.mul_vec(&ones).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (lambda, exact) = if n <= DENSE_EIGEN_LIMIT {
            (dense_min_eigenvalue(k), true)
        } else {
            (estimate_min_eigenvalue(k, 3000), false)
        };
        Self {
            n,
            nnz: k.nnz(),
            k_norm_inf: k.norm_inf(),
            k_asymmetry_inf: k.asymmetry_inf(),
            k_null_residual_inf: null_res,
            c_asymmetry_inf: ops.c.asymmetry_inf(),
            k_min_eigenvalue: lambda,
            eigenvalue_exact: exact,
        }
    }
}

pub fn dense_min_eigenvalue(k: &CsrMatrix) -> f64 {
    if k.nrows() == 0 {
        return 0.0;
    }
    let d = k.to_dense();
    let sym = (&d + d.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Smallest eigenvalue of a symmetric matrix from two power iterations: one
/// for λ_max, then one on λ_max·I − K.
pub fn estimate_min_eigenvalue(k: &CsrMatrix, iterations: usize) -> f64 {
    let n = k.nrows();
    if n == 0 {
        return 0.0;
    }
    let top = power(n, iterations, |x, y| k.mul_vec_into(x, y));
    let shift = top.abs();
    let mu = power(n, iterations, |x, y| {
        k.mul_vec_into(x, y);
        y.iter_mut().zip(x).for_each(|(y, x)| *y = shift * x - *y);
    });
    shift - mu
}

fn power(n: usize, iterations: usize, apply: impl Fn(&[f64], &mut [f64])) -> f64 {
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64) * 0.618_034).fract()).collect();
    let mut y = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let norm = dot(&x, &x).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        apply(&x, &mut y);
        let next = dot(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}
