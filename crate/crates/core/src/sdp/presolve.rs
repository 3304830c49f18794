//! Exact elimination of free variables ahead of the interior-point phase.
//!
//! Each free column is pivoted out of the row system by Gaussian elimination
//! with threshold pivoting (the sparsest row among those whose entry is within
//! a factor of the column maximum). The remaining rows only involve cone
//! variables. Free values are recovered by back substitution; the multipliers
//! of pivot rows follow from `A_f' y = c_f` in reverse elimination order.

use super::{ConeLayout, SdpInstance, SparseRow};
use std::collections::BTreeSet;

const PIVOT_THRESHOLD: f64 = 0.1;
const CANCEL_TOL: f64 = 1e-12;
const EMPTY_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Step {
    row: usize,
    col: usize,
    pivot: f64,
    entries: SparseRow,
    rhs: f64,
    cost: f64,
    updates: Vec<(usize, f64)>,
}

/// Outcome of eliminating the free block.
#[derive(Debug, Clone)]
pub(super) enum Presolved {
    Reduced(Reduced),
    /// Some row reduced to `0 = b` with `b` clearly nonzero.
    Inconsistent,
    /// A free column with nonzero cost appears in no row.
    Unbounded,
}

#[derive(Debug, Clone)]
pub(super) struct Reduced {
    /// Cone-only instance over the surviving rows; columns are the original
    /// cone columns shifted down by the number of free variables.
    pub instance: SdpInstance,
    /// Original index of each surviving row.
    pub kept: Vec<usize>,
    /// Constant added to the reduced objective to recover the original one.
    #[cfg_attr(not(test), allow(dead_code))]
    pub offset: f64,
    nfree: usize,
    steps: Vec<Step>,
}

fn coef(row: &SparseRow, col: usize) -> f64 {
    row.binary_search_by_key(&col, |e| e.0).map_or(0.0, |p| row[p].1)
}

fn axpy_row(target: &SparseRow, m: f64, source: &SparseRow) -> SparseRow {
    let mut out = Vec::with_capacity(target.len() + source.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < source.len() {
        let take_t = j >= source.len() || (i < target.len() && target[i].0 < source[j].0);
        let take_s = i >= target.len() || (j < source.len() && source[j].0 < target[i].0);
        if take_t {
            out.push(target[i]);
            i += 1;
        } else if take_s {
            out.push((source[j].0, -m * source[j].1));
            j += 1;
        } else {
            let (k, a) = target[i];
            let d = m * source[j].1;
            let v = a - d;
            if v.abs() > CANCEL_TOL * (a.abs() + d.abs()) {
                out.push((k, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Rows must be sorted by column with duplicates merged.
pub(super) fn eliminate_free(inst: &SdpInstance, rows: Vec<SparseRow>) -> Presolved {
    let nfree = inst.layout.free;
    let mut rows = rows;
    let mut b = inst.b.clone();
    let mut c = inst.c.clone();
    let mut offset = 0.0;
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nfree];
    for (i, r) in rows.iter().enumerate() {
        for &(k, _) in r.iter().take_while(|e| e.0 < nfree) {
            col_rows[k].insert(i);
        }
    }
    let mut is_pivot = vec![false; rows.len()];
    let mut done = vec![false; nfree];
    let mut steps = Vec::new();
    for _ in 0..nfree {
        // Column with the fewest remaining rows first.
        let Some(col) = (0..nfree).filter(|&k| !done[k]).min_by_key(|&k| col_rows[k].len()) else { break };
        done[col] = true;
        if col_rows[col].is_empty() {
            if c[col] != 0.0 {
                return Presolved::Unbounded;
            }
            continue;
        }
        let amax = col_rows[col].iter().map(|&i| coef(&rows[i], col).abs()).fold(0.0, f64::max);
        let row = col_rows[col]
            .iter()
            .copied()
            .filter(|&i| coef(&rows[i], col).abs() >= PIVOT_THRESHOLD * amax)
            .min_by_key(|&i| rows[i].len())
            .expect("column maximum is attained");
        let pivot = coef(&rows[row], col);
        let entries = std::mem::take(&mut rows[row]);
        is_pivot[row] = true;
        for &(k, _) in entries.iter().take_while(|e| e.0 < nfree) {
            col_rows[k].remove(&row);
        }
        let targets: Vec<usize> = col_rows[col].iter().copied().collect();
        let mut updates = Vec::with_capacity(targets.len());
        for i in targets {
            let m = coef(&rows[i], col) / pivot;
            let before: Vec<usize> = rows[i].iter().take_while(|e| e.0 < nfree).map(|e| e.0).collect();
            let mut next = axpy_row(&rows[i], m, &entries);
            next.retain(|e| e.0 != col);
            for k in before {
                col_rows[k].remove(&i);
            }
            for &(k, _) in next.iter().take_while(|e| e.0 < nfree) {
                col_rows[k].insert(i);
            }
            rows[i] = next;
            b[i] -= m * b[row];
            updates.push((i, m));
        }
        col_rows[col].clear();
        let cost = c[col];
        if cost != 0.0 {
            let f = cost / pivot;
            for &(k, a) in &entries {
                c[k] -= f * a;
            }
            c[col] = 0.0;
            offset += f * b[row];
        }
        steps.push(Step { row, col, pivot, rhs: b[row], entries, cost, updates });
    }

    let bscale = inst.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut kept = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if is_pivot[i] {
            continue;
        }
        if r.is_empty() {
            if b[i].abs() > EMPTY_ROW_TOL * bscale {
                return Presolved::Inconsistent;
            }
            continue;
        }
        kept.push(i);
    }
    let layout = ConeLayout { free: 0, nonneg: inst.layout.nonneg, psd: inst.layout.psd.clone() };
    let mut instance = SdpInstance::new(layout);
    instance.c.copy_from_slice(&c[nfree..]);
    for &i in &kept {
        debug_assert!(rows[i].iter().all(|e| e.0 >= nfree));
        instance.push_row(rows[i].iter().map(|&(k, a)| (k - nfree, a)).collect(), b[i]);
    }
    Presolved::Reduced(Reduced { instance, kept, offset, nfree, steps })
}

impl Reduced {
    /// Full-width primal vector from a reduced one.
    pub fn expand_x(&self, reduced: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.nfree + reduced.len()];
        x[self.nfree..].copy_from_slice(reduced);
        for st in self.steps.iter().rev() {
            let rest: f64 = st.entries.iter().filter(|e| e.0 != st.col).map(|&(k, a)| a * x[k]).sum();
            x[st.col] = (st.rhs - rest) / st.pivot;
        }
        x
    }

    /// Multipliers for every original row from those of the surviving rows.
    pub fn expand_y(&self, reduced: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows];
        for (&i, &v) in self.kept.iter().zip(reduced) {
            y[i] = v;
        }
        for st in self.steps.iter().rev() {
            y[st.row] = st.cost / st.pivot - st.updates.iter().map(|&(i, m)| m * y[i]).sum::<f64>();
        }
        y
    }
}
