//! Dense kernels the interior-point solver leans on: a blocked Cholesky
//! factorization and triangular solves built on nalgebra's `gemm`.

use nalgebra::{DMatrix, DVector};

const NB: usize = 96;

/// Overwrites the lower triangle of `a` with its Cholesky factor `L`
/// (`a = L L^T`). The strict upper triangle is left untouched. On failure
/// returns the column at which a nonpositive pivot appeared.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> Result<(), usize> {
    cholesky_blocked(a, None).map(|_| ())
}

/// How [`regularized_pivot_cholesky`] treats a negligible pivot.
#[derive(Debug, Clone, Copy)]
pub struct PivotRule {
    /// Pivots at or below `tiny * a[j][j]` count as negligible.
    pub tiny: f64,
    /// Replacement pivot, relative to `a[j][j]`.
    pub replacement: f64,
}

/// Cholesky for positive semidefinite matrices with (numerically) dependent
/// rows: negligible pivots are replaced per `rule`, so the factor is that of
/// a nearby positive definite matrix. Returns the number of replaced pivots,
/// or the failing column when a pivot is non-finite.
pub fn regularized_pivot_cholesky(a: &mut DMatrix<f64>, rule: PivotRule) -> Result<usize, usize> {
    cholesky_blocked(a, Some(rule))
}

fn cholesky_blocked(a: &mut DMatrix<f64>, rule: Option<PivotRule>) -> Result<usize, usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut replaced = 0;
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        replaced += factor_diagonal_block(a, k, kb, rule, &diag)?;
        let rest = n - k - kb;
        if rest > 0 {
            panel_solve(a, k, kb);
            let panel = a.view((k + kb, k), (rest, kb)).into_owned();
            let mut c = 0;
            while c < rest {
                let w = NB.min(rest - c);
                let left = panel.rows(c, rest - c);
                let right = panel.rows(c, w).transpose();
                a.view_mut((k + kb + c, k + kb + c), (rest - c, w)).gemm(-1.0, &left, &right, 1.0);
                c += w;
            }
        }
        k += kb;
    }
    Ok(replaced)
}

fn factor_diagonal_block(
    a: &mut DMatrix<f64>,
    k: usize,
    kb: usize,
    rule: Option<PivotRule>,
    diag: &[f64],
) -> Result<usize, usize> {
    let mut replaced = 0;
    for j in k..k + kb {
        let mut d = a[(j, j)];
        for p in k..j {
            d -= a[(j, p)] * a[(j, p)];
        }
        match rule {
            Some(r) if d.is_finite() && d <= r.tiny * diag[j].abs() => {
                d = r.replacement * diag[j].abs().max(f64::MIN_POSITIVE);
                replaced += 1;
            }
            _ => {}
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(j);
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..k + kb {
            let mut v = a[(i, j)];
            for p in k..j {
                v -= a[(i, p)] * a[(j, p)];
            }
            a[(i, j)] = v / d;
        }
    }
    Ok(replaced)
}

/// `A21 <- A21 L11^{-T}`, column by column so inner loops are contiguous.
fn panel_solve(a: &mut DMatrix<f64>, k: usize, kb: usize) {
    let n = a.nrows();
    let lo = k + kb;
    for j in k..k + kb {
        for p in k..j {
            let ljp = a[(j, p)];
            if ljp == 0.0 {
                continue;
            }
            let (src, mut dst) = a.columns_range_pair_mut(p, j);
            let src = src.rows(lo, n - lo);
            let mut dst = dst.rows_mut(lo, n - lo);
            dst.axpy(-ljp, &src, 1.0);
        }
        let d = a[(j, j)];
        a.view_mut((lo, j), (n - lo, 1)).scale_mut(1.0 / d);
    }
}

/// Solves `L x = b` in place, reading only the lower triangle of `l`.
pub fn solve_lower(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for j in 0..n {
        let xj = b[j] / l[(j, j)];
        b[j] = xj;
        if xj != 0.0 {
            let col = l.column(j);
            for i in j + 1..n {
                b[i] -= col[i] * xj;
            }
        }
    }
}

/// Solves `L^T x = b` in place, reading only the lower triangle of `l`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for j in (0..n).rev() {
        let col = l.column(j);
        let mut v = b[j];
        for i in j + 1..n {
            v -= col[i] * b[i];
        }
        b[j] = v / l[(j, j)];
    }
}

/// Solves `L X = B` in place for many right-hand sides.
pub fn solve_lower_multi(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    let r = b.ncols();
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        for c in 0..r {
            for j in k..k + kb {
                let xj = b[(j, c)] / l[(j, j)];
                b[(j, c)] = xj;
                if xj != 0.0 {
                    for i in j + 1..k + kb {
                        b[(i, c)] -= l[(i, j)] * xj;
                    }
                }
            }
        }
        let rest = n - k - kb;
        if rest > 0 {
            let solved = b.rows(k, kb).into_owned();
            let lpanel = l.view((k + kb, k), (rest, kb));
            b.rows_mut(k + kb, rest).gemm(-1.0, &lpanel, &solved, 1.0);
        }
        k += kb;
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
