//! Block-conic programs and an interior-point solver for them.
//!
//! The standard form is
//!
//! ```text
//! minimize   c^T x
//! subject to A x = b,   x in R^f x R_+^l x S_+^{n_1} x ... x S_+^{n_k}
//! ```
//!
//! Each PSD block is stored as `svec`: the upper triangle in column-major
//! order (`X[i][j]` with `i <= j` at index `j(j+1)/2 + i`), with off-diagonal
//! entries multiplied by `sqrt(2)` so that `<C, X> = svec(C) . svec(X)`.

pub mod dense;
mod ipm;
mod presolve;
pub mod sdpa;

pub use ipm::solve;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("row {row} references column {col}, but the instance has {width} columns")]
    ColumnOutOfRange { row: usize, col: usize, width: usize },
    #[error("objective has {got} entries, expected {expected}")]
    ObjectiveLength { expected: usize, got: usize },
    #[error("{rows} rows but {rhs} right-hand-side entries")]
    RhsLength { rows: usize, rhs: usize },
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("PSD blocks must have positive side length")]
    EmptyBlock,
}

/// Cone structure of the decision vector: free entries first, then
/// nonnegative entries, then PSD blocks in svec form.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConeLayout {
    pub free: usize,
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeLayout {
    pub fn width(&self) -> usize {
        self.free + self.nonneg + self.psd.iter().map(|&s| svec_len(s)).sum::<usize>()
    }

    /// Offset of the first svec entry of PSD block `j`.
    pub fn psd_offset(&self, j: usize) -> usize {
        self.free + self.nonneg + self.psd[..j].iter().map(|&s| svec_len(s)).sum::<usize>()
    }

    pub fn largest_psd(&self) -> usize {
        self.psd.iter().copied().max().unwrap_or(0)
    }

    /// Barrier parameter: total cone rank excluding the free part.
    pub fn degree(&self) -> usize {
        self.nonneg + self.psd.iter().sum::<usize>()
    }
}

pub fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// svec position of `X[i][j]` (symmetric, any order of `i`, `j`).
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

pub fn svec_to_matrix(v: &[f64], side: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(side, side);
    for j in 0..side {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT_2;
                m[(j, i)] = x / SQRT_2;
            }
        }
    }
    m
}

pub fn matrix_to_svec(m: &DMatrix<f64>) -> Vec<f64> {
    let side = m.nrows();
    let mut v = vec![0.0; svec_len(side)];
    for j in 0..side {
        for i in 0..=j {
            v[svec_index(i, j)] = if i == j { m[(i, i)] } else { SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
        }
    }
    v
}

/// A sparse equality row `sum_k a_k x_k = b`.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpInstance {
    pub layout: ConeLayout,
    pub c: Vec<f64>,
    pub rows: Vec<SparseRow>,
    pub b: Vec<f64>,
}

impl SdpInstance {
    pub fn new(layout: ConeLayout) -> Self {
        let width = layout.width();
        SdpInstance { layout, c: vec![0.0; width], rows: Vec::new(), b: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn push_row(&mut self, row: SparseRow, rhs: f64) {
        self.rows.push(row);
        self.b.push(rhs);
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let width = self.width();
        if self.layout.psd.contains(&0) {
            return Err(SdpError::EmptyBlock);
        }
        if self.c.len() != width {
            return Err(SdpError::ObjectiveLength { expected: width, got: self.c.len() });
        }
        if self.rows.len() != self.b.len() {
            return Err(SdpError::RhsLength { rows: self.rows.len(), rhs: self.b.len() });
        }
        for (row, entries) in self.rows.iter().enumerate() {
            for &(col, v) in entries {
                if col >= width {
                    return Err(SdpError::ColumnOutOfRange { row, col, width });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite("constraint matrix"));
                }
            }
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(SdpError::NonFinite("objective or right-hand side"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// `A x - b` for each row.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.b)
            .map(|(r, b)| r.iter().map(|&(k, a)| a * x[k]).sum::<f64>() - b)
            .collect()
    }

    /// PSD block `j` of a full-width vector as a symmetric matrix.
    pub fn block_matrix(&self, v: &[f64], j: usize) -> DMatrix<f64> {
        let off = self.layout.psd_offset(j);
        let side = self.layout.psd[j];
        svec_to_matrix(&v[off..off + svec_len(side)], side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
    pub verbose: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { gap_tol: 1e-8, feas_tol: 1e-8, max_iters: 200, step_fraction: 0.98, verbose: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterLimit,
    Numerical,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "Optimal",
            Status::PrimalInfeasible => "PrimalInfeasible",
            Status::DualInfeasible => "DualInfeasible",
            Status::IterLimit => "IterLimit",
            Status::Numerical => "Numerical",
        })
    }
}

/// Solver output in the instance's original (unscaled) coordinates.
///
/// `y` has one entry per row, `s = c - A^T y` shares the layout of `x`.
/// Infeasibility statuses carry the last iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_and_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let va = matrix_to_svec(&a);
        assert_eq!(va.len(), 6);
        assert_eq!(svec_to_matrix(&va, 3), a);
        let dot: f64 = va.iter().zip(matrix_to_svec(&b)).map(|(x, y)| x * y).sum();
        assert!((dot - a.component_mul(&b).sum()).abs() < 1e-12);
        assert_eq!(svec_index(1, 2), 4);
        assert_eq!(svec_index(2, 1), 4);
    }

    #[test]
    fn layout_offsets() {
        let l = ConeLayout { free: 2, nonneg: 1, psd: vec![2, 3] };
        assert_eq!(l.width(), 2 + 1 + 3 + 6);
        assert_eq!(l.psd_offset(1), 6);
        assert_eq!(l.degree(), 6);
        assert_eq!(l.largest_psd(), 3);
    }
}
