//! Infeasible-start primal-dual path following with Nesterov-Todd scaling
//! and Mehrotra's predictor-corrector.
//!
//! Free variables are pivoted out beforehand (see `presolve`), so the Newton
//! system reduces to the normal equations `A W A' dy = r` with `W` the
//! scaling of the cone part.

use super::dense::{min_eigenvalue, regularized_pivot_cholesky, PivotRule, solve_lower, solve_lower_transpose};
use super::presolve::{eliminate_free, Presolved};
use super::{SdpError, SdpInstance, SdpSolution, SolveSettings, SparseRow, Status, svec_len, svec_to_matrix};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::SQRT_2;

/// Normal-equation pivots below this fraction of their diagonal are treated
/// as (numerically) dependent rows and replaced.
const PIVOT_TINY: f64 = 1e-13;
const PIVOT_REPLACEMENT: f64 = 2e-7;
/// Complementarity is kept above this multiple of the relative
/// infeasibility left (times its starting value).
const CENTERING_LAG: f64 = 1.0;
const OPERATOR_REFINEMENT_STEPS: usize = 3;
/// Iterations without halving the worst optimality measure before giving up.
const STAGNATION_ITERS: usize = 25;
/// Largest relative primal residual repaired by a final projection.
const PROJECTION_RANGE: f64 = 1e-4;
const PCG_STEPS: usize = 50;
const PCG_TOL: f64 = 1e-14;

/// Row `row`'s coefficients inside one PSD block, as upper-triangle matrix
/// entries `(p, q, a)` with `p <= q`; the symmetric matrix has `a` at both
/// `(p, q)` and `(q, p)`.
struct BlockRow {
    row: usize,
    entries: Vec<(usize, usize, f64)>,
    pivots: Vec<usize>,
}

struct Data {
    m: usize,
    sides: Vec<usize>,
    lp_cols: Vec<Vec<(usize, f64)>>,
    blocks: Vec<Vec<BlockRow>>,
    b: DVector<f64>,
    cl: DVector<f64>,
    cs: Vec<DMatrix<f64>>,
}

#[derive(Clone)]
struct Point {
    xl: DVector<f64>,
    xs: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    sl: DVector<f64>,
    ss: Vec<DMatrix<f64>>,
}

struct Direction {
    dxl: DVector<f64>,
    dxs: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dsl: DVector<f64>,
    dss: Vec<DMatrix<f64>>,
}

struct Residuals {
    rp: DVector<f64>,
    rdl: DVector<f64>,
    rds: Vec<DMatrix<f64>>,
}

/// Nesterov-Todd scaling of one PSD block: `W = R R'`, `R' S R = R^{-1} X R^{-T} = diag(lambda)`.
struct Nt {
    r: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
    lx: DMatrix<f64>,
    ls: DMatrix<f64>,
}

/// Cholesky factor of `D^{-1} M D^{-1}` with `D = sqrt(diag M)`.
struct Factor {
    l: DMatrix<f64>,
    m: DMatrix<f64>,
    d: DVector<f64>,
    dropped: usize,
}

fn sym_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn block_dot(entries: &[(usize, usize, f64)], x: &DMatrix<f64>) -> f64 {
    entries.iter().map(|&(p, q, a)| if p == q { a * x[(p, p)] } else { a * (x[(p, q)] + x[(q, p)]) }).sum()
}

impl Data {
    fn apply_cone(&self, xl: &DVector<f64>, xs: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (col, x) in self.lp_cols.iter().zip(xl.iter()) {
            for &(r, a) in col {
                out[r] += a * x;
            }
        }
        for (rows, x) in self.blocks.iter().zip(xs) {
            for br in rows {
                out[br.row] += block_dot(&br.entries, x);
            }
        }
        out
    }

    fn adjoint_lp(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.lp_cols.len(), self.lp_cols.iter().map(|c| c.iter().map(|&(r, a)| a * y[r]).sum()))
    }

    fn adjoint_block(&self, j: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let s = self.sides[j];
        let mut out = DMatrix::zeros(s, s);
        for br in &self.blocks[j] {
            let v = y[br.row];
            if v == 0.0 {
                continue;
            }
            for &(p, q, a) in &br.entries {
                out[(p, q)] += a * v;
                if p != q {
                    out[(q, p)] += a * v;
                }
            }
        }
        out
    }

    fn residuals(&self, pt: &Point) -> Residuals {
        let ax = self.apply_cone(&pt.xl, &pt.xs);
        Residuals {
            rp: &self.b - ax,
            rdl: &self.cl - self.adjoint_lp(&pt.y) - &pt.sl,
            rds: (0..self.sides.len()).map(|j| &self.cs[j] - self.adjoint_block(j, &pt.y) - &pt.ss[j]).collect(),
        }
    }

    fn primal_objective(&self, pt: &Point) -> f64 {
        self.cl.dot(&pt.xl) + self.cs.iter().zip(&pt.xs).map(|(c, x)| sym_inner(c, x)).sum::<f64>()
    }

    fn c_norm(&self) -> f64 {
        (self.cl.norm_squared() + self.cs.iter().map(|c| c.norm_squared()).sum::<f64>()).sqrt()
    }

    /// `A W A'` (full symmetric), `W` given per block.
    fn schur(&self, ws: &[&DMatrix<f64>], wl: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.m, self.m);
        for (col, &w) in self.lp_cols.iter().zip(wl.iter()) {
            for &(i, a) in col {
                for &(k, c) in col {
                    m[(i, k)] += a * c * w;
                }
            }
        }
        for (j, rows) in self.blocks.iter().enumerate() {
            let s = self.sides[j];
            let w = ws[j];
            let mut g = DMatrix::<f64>::zeros(s, s);
            let mut t = vec![0.0; s];
            for (idx, br) in rows.iter().enumerate() {
                // Upper triangle of G = W A W, accumulated as sum_r W[:, r] (A W)[r, :].
                g.fill(0.0);
                for &r in &br.pivots {
                    t.iter_mut().for_each(|v| *v = 0.0);
                    for &(p, q, a) in &br.entries {
                        let other = if p == r {
                            q
                        } else if q == r {
                            p
                        } else {
                            continue;
                        };
                        let col = w.column(other);
                        for (tv, wv) in t.iter_mut().zip(col.iter()) {
                            *tv += a * wv;
                        }
                    }
                    let wr = w.column(r);
                    for q in 0..s {
                        let tq = t[q];
                        if tq == 0.0 {
                            continue;
                        }
                        let mut gq = g.column_mut(q);
                        for p in 0..=q {
                            gq[p] += tq * wr[p];
                        }
                    }
                }
                for other in &rows[..=idx] {
                    let mut v = 0.0;
                    for &(p, q, a) in &other.entries {
                        v += if p == q { a * g[(p, p)] } else { 2.0 * a * g[(p, q)] };
                    }
                    m[(br.row, other.row)] += v;
                    if br.row != other.row {
                        m[(other.row, br.row)] += v;
                    }
                }
            }
        }
        m
    }

    fn factor(&self, nts: &[Nt], wl: &DVector<f64>) -> Option<Factor> {
        let ws: Vec<&DMatrix<f64>> = nts.iter().map(|nt| &nt.w).collect();
        let m = self.schur(&ws, wl);
        let d = DVector::from_iterator(self.m, (0..self.m).map(|i| if m[(i, i)] > 0.0 { m[(i, i)].sqrt() } else { 1.0 }));
        let mut l = DMatrix::from_fn(self.m, self.m, |i, j| m[(i, j)] / (d[i] * d[j]));
        let dropped = regularized_pivot_cholesky(&mut l, PivotRule { tiny: PIVOT_TINY, replacement: PIVOT_REPLACEMENT }).ok()?;
        Some(Factor { l, m, d, dropped })
    }

    /// Factor of `A A'` for minimum-norm feasibility corrections.
    fn gram_factor(&self) -> Option<Factor> {
        let eyes: Vec<DMatrix<f64>> = self.sides.iter().map(|&s| DMatrix::identity(s, s)).collect();
        let ws: Vec<&DMatrix<f64>> = eyes.iter().collect();
        let m = self.schur(&ws, &DVector::from_element(self.lp_cols.len(), 1.0));
        let d = DVector::from_iterator(self.m, (0..self.m).map(|i| if m[(i, i)] > 0.0 { m[(i, i)].sqrt() } else { 1.0 }));
        let mut l = DMatrix::from_fn(self.m, self.m, |i, j| m[(i, j)] / (d[i] * d[j]));
        let dropped = regularized_pivot_cholesky(&mut l, PivotRule { tiny: 1e-12, replacement: 1e64 }).ok()?;
        Some(Factor { l, m, d, dropped })
    }

    /// Moves the primal part onto `A x = b` along `A' z`, the shortest
    /// correction. The cone constraints may be violated by the size of the
    /// correction; callers check.
    fn project_primal(&self, gram: &Factor, pt: &Point, rp: &DVector<f64>) -> Point {
        let z = self.solve_normal(gram, rp);
        let mut out = pt.clone();
        out.xl += self.adjoint_lp(&z);
        for (j, x) in out.xs.iter_mut().enumerate() {
            *x += self.adjoint_block(j, &z);
        }
        out
    }

    /// Solves `M dy = r` with a few steps of iterative refinement against
    /// the unshifted `M`.
    fn solve_normal(&self, f: &Factor, r: &DVector<f64>) -> DVector<f64> {
        let chol = |v: &mut DVector<f64>| {
            v.component_div_assign(&f.d);
            solve_lower(&f.l, v);
            solve_lower_transpose(&f.l, v);
            v.component_div_assign(&f.d);
        };
        // Conjugate gradients on `M`, preconditioned by the factorization.
        let rnorm = r.norm();
        let mut dy = r.clone();
        chol(&mut dy);
        let mut res = r - &f.m * &dy;
        let mut best = (res.norm(), dy.clone());
        let mut z = res.clone();
        chol(&mut z);
        let mut p = z.clone();
        let mut rz = res.dot(&z);
        for _ in 0..PCG_STEPS {
            if best.0 <= PCG_TOL * rnorm || !(rz > 0.0) {
                break;
            }
            let mp = &f.m * &p;
            let pmp = p.dot(&mp);
            if !(pmp > 0.0) {
                break;
            }
            let alpha = rz / pmp;
            dy.axpy(alpha, &p, 1.0);
            res.axpy(-alpha, &mp, 1.0);
            let norm = res.norm();
            if norm < best.0 {
                best = (norm, dy.clone());
            }
            z.copy_from(&res);
            chol(&mut z);
            let rz_next = res.dot(&z);
            p = &z + &p * (rz_next / rz);
            rz = rz_next;
        }
        best.1
    }

    /// Newton direction for the complementarity targets `rcl` (nonnegative
    /// part) and `rcs` (PSD blocks, unscaled), i.e. `dx + W ds W = rc`.
    fn direction(
        &self,
        f: &Factor,
        nts: &[Nt],
        wl: &DVector<f64>,
        res: &Residuals,
        rcl: &DVector<f64>,
        rcs: &[DMatrix<f64>],
    ) -> Direction {
        let tl = rcl - wl.component_mul(&res.rdl);
        let ts: Vec<DMatrix<f64>> =
            nts.iter().zip(rcs).zip(&res.rds).map(|((nt, rc), rd)| rc - &nt.w * rd * &nt.w).collect();
        let r1 = &res.rp - self.apply_cone(&tl, &ts);
        let mut dy = self.solve_normal(f, &r1);
        let mut dir = self.recover(nts, wl, res, rcl, rcs, dy.clone());
        // Refine against the operator itself: the formed `M` carries rounding
        // errors of its own once the scaling is badly conditioned.
        let mut err_norm = f64::INFINITY;
        for _ in 0..OPERATOR_REFINEMENT_STEPS {
            let err = &res.rp - self.apply_cone(&dir.dxl, &dir.dxs);
            let norm = err.norm();
            if !(norm < 0.5 * err_norm) || norm <= 1e-15 * (1.0 + res.rp.norm()) {
                break;
            }
            err_norm = norm;
            dy += self.solve_normal(f, &err);
            dir = self.recover(nts, wl, res, rcl, rcs, dy.clone());
        }
        dir
    }

    fn recover(
        &self,
        nts: &[Nt],
        wl: &DVector<f64>,
        res: &Residuals,
        rcl: &DVector<f64>,
        rcs: &[DMatrix<f64>],
        dy: DVector<f64>,
    ) -> Direction {
        let dsl = &res.rdl - self.adjoint_lp(&dy);
        let dxl = rcl - wl.component_mul(&dsl);
        let dss: Vec<DMatrix<f64>> = (0..self.sides.len()).map(|j| &res.rds[j] - self.adjoint_block(j, &dy)).collect();
        let dxs = nts.iter().zip(rcs).zip(&dss).map(|((nt, rc), ds)| rc - &nt.w * ds * &nt.w).collect();
        Direction { dxl, dxs, dy, dsl, dss }
    }
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Nt> {
    let lx = x.clone().cholesky()?.unpack();
    let ls = s.clone().cholesky()?.unpack();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(false, true);
    let vt = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return None;
    }
    let mut r = &lx * vt.transpose();
    for (mut col, &l) in r.column_iter_mut().zip(lambda.iter()) {
        col /= l.sqrt();
    }
    let w = &r * r.transpose();
    Some(Nt { r, w, lambda, lx, ls })
}

/// Largest `alpha` with `L L' + alpha d` PSD, where `L` is the Cholesky factor.
fn max_step_psd(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(b) = l.solve_lower_triangular(d) else { return 0.0 };
    let Some(q) = l.solve_lower_triangular(&b.transpose()) else { return 0.0 };
    let lmin = min_eigenvalue(&q);
    if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter().zip(dx.iter()).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(f64::INFINITY, f64::min)
}

fn step_lengths(pt: &Point, nts: &[Nt], d: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(&pt.xl, &d.dxl);
    let mut ad = max_step_lp(&pt.sl, &d.dsl);
    for (nt, (dx, ds)) in nts.iter().zip(d.dxs.iter().zip(&d.dss)) {
        ap = ap.min(max_step_psd(&nt.lx, dx));
        ad = ad.min(max_step_psd(&nt.ls, ds));
    }
    (ap, ad)
}

fn complementarity(xl: &DVector<f64>, sl: &DVector<f64>, xs: &[DMatrix<f64>], ss: &[DMatrix<f64>]) -> f64 {
    xl.dot(sl) + xs.iter().zip(ss).map(|(x, s)| sym_inner(x, s)).sum::<f64>()
}

struct Prepared {
    data: Data,
    kept: Vec<usize>,
    row_scale: Vec<f64>,
    c_scale: f64,
}

fn merge_rows(rows: &[SparseRow]) -> Vec<SparseRow> {
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            r.sort_by_key(|e| e.0);
            let mut out: SparseRow = Vec::with_capacity(r.len());
            for (k, v) in r {
                match out.last_mut() {
                    Some(last) if last.0 == k => last.1 += v,
                    _ => out.push((k, v)),
                }
            }
            out.retain(|e| e.1 != 0.0);
            out
        })
        .collect()
}

/// Equilibrates a cone-only instance (rows to unit norm, objective to unit
/// norm) and splits it by cone. Rows must already be merged and nonempty.
fn prepare(inst: &SdpInstance) -> Prepared {
    let layout = &inst.layout;
    debug_assert_eq!(layout.free, 0);
    let lp_end = layout.nonneg;
    let width = layout.width();

    // Column -> (block, p, q) lookup for PSD columns.
    let mut psd_pos = vec![(0usize, 0usize, 0usize); width - lp_end];
    for (j, &s) in layout.psd.iter().enumerate() {
        let off = layout.psd_offset(j) - lp_end;
        for q in 0..s {
            for p in 0..=q {
                psd_pos[off + super::svec_index(p, q)] = (j, p, q);
            }
        }
    }

    let m = inst.rows.len();
    let c_norm = inst.c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let mut row_scale = Vec::with_capacity(m);
    let mut lp_cols = vec![Vec::new(); layout.nonneg];
    let mut blocks: Vec<Vec<BlockRow>> = layout.psd.iter().map(|_| Vec::new()).collect();
    let mut b = DVector::zeros(m);
    for (r, row) in inst.rows.iter().enumerate() {
        let norm = row.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        row_scale.push(norm);
        b[r] = inst.b[r] / norm;
        let mut per_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); layout.psd.len()];
        for &(k, a) in row {
            let a = a / norm;
            if k < lp_end {
                lp_cols[k].push((r, a));
            } else {
                let (j, p, q) = psd_pos[k - lp_end];
                per_block[j].push((p, q, if p == q { a } else { a / SQRT_2 }));
            }
        }
        for (j, entries) in per_block.into_iter().enumerate() {
            if !entries.is_empty() {
                let mut pivots: Vec<usize> = entries.iter().flat_map(|&(p, q, _)| [p, q]).collect();
                pivots.sort_unstable();
                pivots.dedup();
                blocks[j].push(BlockRow { row: r, entries, pivots });
            }
        }
    }
    let cl = DVector::from_iterator(layout.nonneg, inst.c[..lp_end].iter().map(|c| c / c_scale));
    let cs = layout
        .psd
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let off = layout.psd_offset(j);
            svec_to_matrix(&inst.c[off..off + svec_len(s)], s) / c_scale
        })
        .collect();
    Prepared {
        data: Data { m, sides: layout.psd.clone(), lp_cols, blocks, b, cl, cs },
        kept: (0..m).collect(),
        row_scale,
        c_scale,
    }
}

fn initial_point(d: &Data) -> Point {
    let nl = d.lp_cols.len();
    let bfac = d.b.iter().fold(0.0f64, |a, b| a.max(1.0 + b.abs()));
    let start = |n: usize, norms: &[f64], cnorm: f64| {
        let nn = n as f64;
        let amax = norms.iter().copied().fold(0.0, f64::max);
        let mut ratio = 1.0f64;
        for r in 0..d.m {
            ratio = ratio.max((1.0 + d.b[r].abs()) / (1.0 + norms[r]));
        }
        if d.m == 0 {
            ratio = bfac.max(1.0);
        }
        let xi = 10f64.max(nn.sqrt()).max(nn * ratio);
        let eta = 10f64.max(nn.sqrt()).max(cnorm.max(amax));
        (xi, eta)
    };
    let mut lp_norms = vec![0.0; d.m];
    for col in &d.lp_cols {
        for &(r, a) in col {
            lp_norms[r] += a * a;
        }
    }
    lp_norms.iter_mut().for_each(|v| *v = v.sqrt());
    let (xi, eta) = start(nl.max(1), &lp_norms, d.cl.norm());
    let xl = DVector::from_element(nl, xi);
    let sl = DVector::from_element(nl, eta);
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for (j, &s) in d.sides.iter().enumerate() {
        let mut norms = vec![0.0; d.m];
        for br in &d.blocks[j] {
            norms[br.row] = br.entries.iter().map(|&(p, q, a)| if p == q { a * a } else { 2.0 * a * a }).sum::<f64>().sqrt();
        }
        let (xi, eta) = start(s, &norms, d.cs[j].norm());
        xs.push(DMatrix::identity(s, s) * xi);
        ss.push(DMatrix::identity(s, s) * eta);
    }
    Point { xl, xs, y: DVector::zeros(d.m), sl, ss }
}

struct Outcome {
    status: Status,
    pt: Point,
    iterations: usize,
}

fn run(d: &Data, settings: &SolveSettings) -> Outcome {
    let nu = (d.lp_cols.len() + d.sides.iter().sum::<usize>()) as f64;
    let mut pt = initial_point(d);
    let bnorm = d.b.norm();
    let cnorm = d.c_norm();
    let mut stalls = 0;
    let mut start: Option<(f64, f64, f64)> = None;
    let mut gram: Option<Option<Factor>> = None;
    let mut best = (f64::INFINITY, 0usize);
    for iter in 0..settings.max_iters {
        let res = d.residuals(&pt);
        let pobj = d.primal_objective(&pt);
        let dobj = d.b.dot(&pt.y);
        let rd_norm = (res.rdl.norm_squared() + res.rds.iter().map(|m| m.norm_squared()).sum::<f64>()).sqrt();
        let pinf = res.rp.norm() / (1.0 + bnorm);
        let dinf = rd_norm / (1.0 + cnorm);
        let comp = complementarity(&pt.xl, &pt.sl, &pt.xs, &pt.ss);
        let mu = if nu > 0.0 { comp / nu } else { 0.0 };
        let gap = (pobj - dobj).abs().max(comp) / (1.0 + pobj.abs() + dobj.abs());
        if settings.verbose {
            eprintln!(
                "{iter:3}  pobj {pobj:+.10e}  dobj {dobj:+.10e}  gap {gap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}  mu {mu:.2e}"
            );
        }
        if pinf <= settings.feas_tol && dinf <= settings.feas_tol && gap <= settings.gap_tol {
            return Outcome { status: Status::Optimal, pt, iterations: iter };
        }
        // Give up once the worst of the three measures stops improving.
        let merit = (pinf / settings.feas_tol).max(dinf / settings.feas_tol).max(gap / settings.gap_tol);
        if merit < 0.5 * best.0 {
            best = (merit, iter);
        } else if iter - best.1 > STAGNATION_ITERS {
            return Outcome { status: Status::Numerical, pt, iterations: iter };
        }
        let (pinf0, dinf0, mu0) = *start.get_or_insert((pinf.max(1e-300), dinf.max(1e-300), mu));
        // Near the end the Newton systems are too ill-conditioned to drive
        // the primal residual down, but `A A'` is not: project and accept if
        // every optimality condition holds at the projected point.
        if dinf <= settings.feas_tol && gap <= settings.gap_tol && pinf <= PROJECTION_RANGE {
            let gram = gram.get_or_insert_with(|| d.gram_factor());
            if let Some(g) = gram.as_ref() {
                let cand = d.project_primal(g, &pt, &res.rp);
                if accept_projected(d, &cand, &pt, bnorm, settings) {
                    return Outcome { status: Status::Optimal, pt: cand, iterations: iter };
                }
            }
        }
        // Improving rays: A'y + s = c - rd with b'y > 0 certifies primal
        // infeasibility; A x = b - rp with c'x < 0 certifies dual infeasibility.
        if dobj > 0.0 {
            let aty = ((&d.cl - &res.rdl).norm_squared()
                + d.cs.iter().zip(&res.rds).map(|(c, r)| (c - r).norm_squared()).sum::<f64>())
            .sqrt();
            if aty / dobj <= settings.feas_tol {
                return Outcome { status: Status::PrimalInfeasible, pt, iterations: iter };
            }
        }
        if pobj < 0.0 && (&d.b - &res.rp).norm() / -pobj <= settings.feas_tol {
            return Outcome { status: Status::DualInfeasible, pt, iterations: iter };
        }

        let mut nts = Vec::with_capacity(d.sides.len());
        for (x, s) in pt.xs.iter().zip(&pt.ss) {
            match nt_scaling(x, s) {
                Some(nt) => nts.push(nt),
                None => return Outcome { status: Status::Numerical, pt, iterations: iter },
            }
        }
        let wl = pt.xl.component_div(&pt.sl);
        let Some(factor) = d.factor(&nts, &wl) else {
            return Outcome { status: Status::Numerical, pt, iterations: iter };
        };

        // Predictor.
        let rcl = -&pt.xl;
        let rcs: Vec<DMatrix<f64>> = pt.xs.iter().map(|x| -x).collect();
        let aff = d.direction(&factor, &nts, &wl, &res, &rcl, &rcs);
        let (ap, ad) = step_lengths(&pt, &nts, &aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xl_a = &pt.xl + &aff.dxl * ap;
        let sl_a = &pt.sl + &aff.dsl * ad;
        let xs_a: Vec<_> = pt.xs.iter().zip(&aff.dxs).map(|(x, dx)| x + dx * ap).collect();
        let ss_a: Vec<_> = pt.ss.iter().zip(&aff.dss).map(|(s, ds)| s + ds * ad).collect();
        let mu_aff = if nu > 0.0 { complementarity(&xl_a, &sl_a, &xs_a, &ss_a) / nu } else { 0.0 };
        let mut sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        // Keep complementarity from outrunning feasibility: once mu is far
        // below the remaining infeasibility the Newton systems become too
        // ill-conditioned to reduce it.
        let lag = |v: f64, v0: f64| if v > 0.1 * settings.feas_tol { v / v0 } else { 0.0 };
        let floor = CENTERING_LAG * mu0 * lag(pinf, pinf0).max(lag(dinf, dinf0));
        // Nothing is gained by aiming below what the gap tolerance needs, and
        // the Newton systems degrade quickly past that point.
        let needed = 0.1 * settings.gap_tol * (1.0 + pobj.abs() + dobj.abs()) / nu.max(1.0);
        let floor = floor.max(needed);
        if mu > 0.0 && sigma * mu < floor {
            sigma = (floor / mu).min(1.0);
        }

        // Corrector.
        let target = sigma * mu;
        let rcl = DVector::from_iterator(
            pt.xl.len(),
            (0..pt.xl.len()).map(|i| (target - pt.xl[i] * pt.sl[i] - aff.dxl[i] * aff.dsl[i]) / pt.sl[i]),
        );
        let rcs: Vec<DMatrix<f64>> = nts
            .iter()
            .zip(&aff.dss)
            .map(|(nt, ds)| {
                let s = nt.lambda.len();
                let ds_t = nt.r.transpose() * ds * &nt.r;
                let mut dx_t = -&ds_t;
                for i in 0..s {
                    dx_t[(i, i)] -= nt.lambda[i];
                }
                let prod = &dx_t * &ds_t;
                let mut z = (&prod + prod.transpose()) * -0.5;
                for i in 0..s {
                    z[(i, i)] += target - nt.lambda[i] * nt.lambda[i];
                }
                for q in 0..s {
                    for p in 0..s {
                        z[(p, q)] *= 2.0 / (nt.lambda[p] + nt.lambda[q]);
                    }
                }
                &nt.r * z * nt.r.transpose()
            })
            .collect();
        let dir = d.direction(&factor, &nts, &wl, &res, &rcl, &rcs);
        let (ap, ad) = step_lengths(&pt, &nts, &dir);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if settings.verbose {
            let lin = (&res.rp - d.apply_cone(&dir.dxl, &dir.dxs)).norm();
            let xmax = pt.xs.iter().map(|x| x.amax()).fold(pt.xl.amax(), f64::max);
            let ymax = pt.y.amax();
            eprintln!("      ap {ap:.3e} ad {ad:.3e} sigma {sigma:.2e} newton-rp {lin:.2e} dropped {} |x| {xmax:.2e} |y| {ymax:.2e}", factor.dropped);
        }
        if ap.min(ad) < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                return Outcome { status: Status::Numerical, pt, iterations: iter + 1 };
            }
        } else {
            stalls = 0;
        }
        pt.xl += &dir.dxl * ap;
        for (x, dx) in pt.xs.iter_mut().zip(&dir.dxs) {
            *x += dx * ap;
            symmetrize(x);
        }
        pt.y += &dir.dy * ad;
        pt.sl += &dir.dsl * ad;
        for (s, ds) in pt.ss.iter_mut().zip(&dir.dss) {
            *s += ds * ad;
            symmetrize(s);
        }
    }
    Outcome { status: Status::IterLimit, pt, iterations: settings.max_iters }
}

fn accept_projected(d: &Data, cand: &Point, pt: &Point, bnorm: f64, settings: &SolveSettings) -> bool {
    let pinf = (&d.b - d.apply_cone(&cand.xl, &cand.xs)).norm() / (1.0 + bnorm);
    if !(pinf <= settings.feas_tol) {
        return false;
    }
    if cand.xl.iter().any(|&v| v < -settings.feas_tol) || cand.xs.iter().any(|x| min_eigenvalue(x) < -settings.feas_tol) {
        return false;
    }
    let pobj = d.primal_objective(cand);
    let dobj = d.b.dot(&pt.y);
    let comp = complementarity(&cand.xl, &pt.sl, &cand.xs, &pt.ss).abs();
    (pobj - dobj).abs().max(comp) / (1.0 + pobj.abs() + dobj.abs()) <= settings.gap_tol
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for q in 0..n {
        for p in 0..q {
            let v = 0.5 * (m[(p, q)] + m[(q, p)]);
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
    }
}

fn decided(inst: &SdpInstance, status: Status) -> SdpSolution {
    SdpSolution {
        status,
        x: vec![0.0; inst.width()],
        y: vec![0.0; inst.rows.len()],
        s: inst.c.clone(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations: 0,
        primal_infeasibility: f64::NAN,
        dual_infeasibility: f64::NAN,
        relative_gap: f64::NAN,
    }
}

/// Solves `inst` to the tolerances in `settings`. Deterministic.
pub fn solve(inst: &SdpInstance, settings: &SolveSettings) -> Result<SdpSolution, SdpError> {
    inst.validate()?;
    let layout = &inst.layout;
    let reduced = match eliminate_free(inst, merge_rows(&inst.rows)) {
        Presolved::Reduced(r) => r,
        Presolved::Inconsistent => return Ok(decided(inst, Status::PrimalInfeasible)),
        Presolved::Unbounded => return Ok(decided(inst, Status::DualInfeasible)),
    };
    let prepared = prepare(&reduced.instance);
    let out = run(&prepared.data, settings);
    let pt = &out.pt;

    let mut xr = vec![0.0; reduced.instance.width()];
    for (i, v) in pt.xl.iter().enumerate() {
        xr[i] = *v;
    }
    for (j, xm) in pt.xs.iter().enumerate() {
        let off = reduced.instance.layout.psd_offset(j);
        let sv = super::matrix_to_svec(xm);
        xr[off..off + sv.len()].copy_from_slice(&sv);
    }
    let mut yr = vec![0.0; reduced.instance.rows.len()];
    for (r, &i) in prepared.kept.iter().enumerate() {
        yr[i] = prepared.c_scale * pt.y[r] / prepared.row_scale[r];
    }
    let x = reduced.expand_x(&xr);
    let y = reduced.expand_y(&yr, inst.rows.len());
    let mut s = inst.c.clone();
    for (row, &yi) in inst.rows.iter().zip(&y) {
        for &(k, a) in row {
            s[k] -= a * yi;
        }
    }
    let primal_objective = inst.objective(&x);
    let dual_objective: f64 = inst.b.iter().zip(&y).map(|(b, y)| b * y).sum();
    let rp: f64 = inst.residual(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
    let bnorm = inst.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Dual residual: the free part of s must vanish; cone parts are slack.
    let rd: f64 = s[..layout.free].iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = inst.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(SdpSolution {
        status: out.status,
        x,
        y,
        s,
        primal_objective,
        dual_objective,
        iterations: out.iterations,
        primal_infeasibility: rp / (1.0 + bnorm),
        dual_infeasibility: rd / (1.0 + cnorm),
        relative_gap: (primal_objective - dual_objective).abs() / (1.0 + primal_objective.abs() + dual_objective.abs()),
    })
}
