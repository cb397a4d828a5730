//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{FpmError, Result};

/// Row pointers and sorted column indices, shared between matrices with the
/// same structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            if r.last().is_some_and(|&c| c >= n) {
                return Err(FpmError::Assembly(format!("column index {} out of range", r.last().unwrap())));
            }
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Ok(Self { row_ptr, col_idx })
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of (i, j) in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i).binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }
}

/// Square sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    /// Sums duplicate entries in input order, so the result does not depend
    /// on how the triplets were produced as long as their order is fixed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(FpmError::Assembly(format!("entry ({i}, {j}) outside a {n}×{n} matrix")));
            }
            rows[i].push(j);
        }
        let mut m = Self::zeros(Arc::new(SparsityPattern::from_rows(rows)?));
        for &(i, j, v) in triplets {
            m.add(i, j, v)?;
        }
        Ok(m)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        self.pattern.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let k = self
            .pattern
            .find(i, j)
            .ok_or_else(|| FpmError::Assembly(format!("entry ({i}, {j}) not in sparsity pattern")))?;
        self.values[k] += v;
        Ok(())
    }

    /// `alpha·self + beta·other`; both must share one pattern.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<CsrMatrix> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(FpmError::Contract("matrices do not share a sparsity pattern".into()));
        }
        Ok(CsrMatrix {
            pattern: self.pattern.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// y = A·x, rows in parallel; each row is summed sequentially.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        y.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, yi)| {
            let (a, b) = (p.row_ptr[i], p.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[p.col_idx[k]];
            }
            *yi = s;
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// ‖A − Aᵀ‖∞.
    pub fn asymmetry_inf(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row(i).map(|(j, v)| (v - self.get(j, i)).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.nrows();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Coordinate text dump: one `row col value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} {} {}", self.nrows(), self.nrows(), self.nnz());
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{i} {j} {v}");
            }
        }
        out
    }
}

/// Dot product with a fixed chunked reduction so the result is independent
/// of thread scheduling.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

/// Dot product using rayon's adaptive reduction; the summation order, and so
/// the last bits of the result, may depend on scheduling.
pub fn dot_unordered(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(p, q)| p * q).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    /// Stop when ‖r‖ ≤ tolerance·‖b‖.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Use the fixed-order reduction for every inner product.
    pub deterministic: bool,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1000,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradient with a diagonal (Jacobi) preconditioner.
/// `x` holds the initial guess on entry and the solution on exit.
pub fn solve_pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], settings: &CgSettings) -> Result<CgOutcome> {
    let n = a.nrows();
    if b.len() != n || x.len() != n {
        return Err(FpmError::Contract("vector length does not match the matrix".into()));
    }
    let dot = if settings.deterministic { dot } else { dot_unordered };
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = a.mul_vec(x);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > settings.tolerance {
        if it == settings.max_iterations {
            return Err(FpmError::SolverDivergence {
                iterations: it,
                residual: res,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FpmError::SolverDivergence {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(&inv_diag)
            .for_each(|((zi, ri), d)| *zi = ri * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    Ok(CgOutcome {
        iterations: it,
        relative_residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(matches!(
            CsrMatrix::from_triplets(2, &[(0, 2, 1.0)]),
            Err(FpmError::Assembly(_))
        ));
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let mut x = vec![0.0; 50];
        let out = solve_pcg(&a, &b, &mut x, &CgSettings { tolerance: 1e-12, max_iterations: 200, ..Default::default() }).unwrap();
        assert!(out.relative_residual <= 1e-12);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = laplacian_1d(100);
        let b = vec![1.0; 100];
        let mut x = vec![0.0; 100];
        let err = solve_pcg(&a, &b, &mut x, &CgSettings { tolerance: 1e-14, max_iterations: 3, ..Default::default() }).unwrap_err();
        assert!(matches!(err, FpmError::SolverDivergence { iterations: 3, .. }));
    }

    #[test]
    fn symmetry_and_norms() {
        let a = laplacian_1d(4);
        assert_eq!(a.asymmetry_inf(), 0.0);
        assert_eq!(a.norm_inf(), 4.0);
        assert_eq!(a.row_sums(), vec![1.0, 0.0, 0.0, 1.0]);
        let text = a.to_coordinate_text();
        assert!(text.starts_with("# 4 4 10\n0 0 2\n"));
    }
}
