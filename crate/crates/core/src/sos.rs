//! Sum-of-squares programs: polynomial decision variables, weighted-SOS
//! membership assertions over semialgebraic sets, and their compilation to
//! block semidefinite programs.
//!
//! An assertion `theta in Sigma[K]_{<= 2d}` for `K = {g_j >= 0, h_i = 0}` is
//! encoded as the coefficient identity
//!
//! ```text
//! theta = m_d' Q_0 m_d + sum_j g_j m_{d_j}' Q_j m_{d_j} + sum_i lambda_i h_i
//! ```
//!
//! with `Q_j` PSD Gram matrices, `d_j = floor((2d - deg g_j) / 2)` and free
//! multiplier polynomials `lambda_i` of degree `2d - deg h_i`. One equality
//! row is emitted per monomial that occurs on either side. Monomials above
//! `2d` can only come from `theta` itself, so their rows force the
//! corresponding decision coefficients to vanish.

use crate::poly::{monomial_basis, Context, Monomial, PolyError, PolyOps, Polynomial, PRUNE_THRESHOLD};
use crate::sdp::{svec_index, svec_len, svec_to_matrix, ConeLayout, SdpInstance, SparseRow};
use crate::semialg::SemialgebraicSet;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("assertion `{assertion}`: {message}")]
    DegreeBound { assertion: String, message: String },
    #[error("assertion `{0}`: expression and set use different variable contexts")]
    ContextMismatch(String),
    #[error("certificate does not match assertion `{0}`")]
    ShapeMismatch(String),
}

/// `constant + sum_k coef_k * scalar_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub linear: BTreeMap<usize, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { constant: c, linear: BTreeMap::new() }
    }

    pub fn scalar(index: usize, coef: f64) -> Self {
        let mut linear = BTreeMap::new();
        linear.insert(index, coef);
        AffineExpr { constant: 0.0, linear }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.linear.is_empty()
    }

    fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.constant += s * other.constant;
        for (&k, &v) in &other.linear {
            *self.linear.entry(k).or_insert(0.0) += s * v;
        }
    }

    fn prune(&mut self) {
        self.linear.retain(|_, v| v.abs() >= PRUNE_THRESHOLD);
        if self.constant.abs() < PRUNE_THRESHOLD {
            self.constant = 0.0;
        }
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out.prune();
        out
    }

    pub fn scale(&self, s: f64) -> AffineExpr {
        let mut out = AffineExpr::default();
        out.add_scaled(self, s);
        out.prune();
        out
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant + self.linear.iter().map(|(&k, v)| v * values[k]).sum::<f64>()
    }
}

/// A polynomial whose coefficients are affine in the program's scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoly {
    ctx: Context,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl AffinePoly {
    pub fn zero(ctx: &Context) -> Self {
        AffinePoly { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let terms = p.terms().map(|(m, c)| (m.clone(), AffineExpr::constant(c))).collect();
        AffinePoly { ctx: p.context().clone(), terms }
    }

    /// A scalar expression placed on the constant monomial.
    pub fn from_affine(ctx: &Context, e: AffineExpr) -> Self {
        let mut out = AffinePoly::zero(ctx);
        if !e.is_zero() {
            out.terms.insert(Monomial::one(ctx.len()), e);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&AffineExpr> {
        self.terms.get(m)
    }

    fn check(&self, other_ctx: &Context) -> Result<(), PolyError> {
        if &self.ctx != other_ctx {
            return Err(PolyError::ContextMismatch);
        }
        Ok(())
    }

    fn insert(terms: &mut BTreeMap<Monomial, AffineExpr>, m: Monomial, e: &AffineExpr, s: f64) {
        terms.entry(m).or_default().add_scaled(e, s);
    }

    fn finish(ctx: &Context, mut terms: BTreeMap<Monomial, AffineExpr>) -> Self {
        for e in terms.values_mut() {
            e.prune();
        }
        terms.retain(|_, e| !e.is_zero());
        AffinePoly { ctx: ctx.clone(), terms }
    }

    /// Fixes `x_index = value`.
    pub fn substitute(&self, index: usize, value: f64) -> Result<Self, PolyError> {
        crate::poly::check_index(&self.ctx, index)?;
        let mut terms = BTreeMap::new();
        for (m, e) in &self.terms {
            let k = m.exponents()[index];
            let mut m2 = m.clone();
            m2.set_exponent(index, 0);
            Self::insert(&mut terms, m2, e, value.powi(k as i32));
        }
        Ok(Self::finish(&self.ctx, terms))
    }

    /// Re-expresses in `target`, matching variable names.
    pub fn embed_into(&self, target: &Context) -> Result<Self, PolyError> {
        let map = crate::poly::variable_map(&self.ctx, target)?;
        let mut terms = BTreeMap::new();
        for (m, e) in &self.terms {
            let m2 = crate::poly::remap_monomial(m, &map, &self.ctx, target)?;
            Self::insert(&mut terms, m2, e, 1.0);
        }
        Ok(Self::finish(target, terms))
    }

    /// The polynomial obtained by plugging in scalar values.
    pub fn evaluate(&self, values: &[f64]) -> Polynomial {
        Polynomial::from_terms(&self.ctx, self.terms.iter().map(|(m, e)| (m.clone(), e.evaluate(values))))
            .expect("monomials match their own context")
    }
}

impl PolyOps for AffinePoly {
    fn context(&self) -> &Context {
        &self.ctx
    }

    fn zero_like(&self) -> Self {
        AffinePoly::zero(&self.ctx)
    }

    fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check(&other.ctx)?;
        let mut terms = self.terms.clone();
        for (m, e) in &other.terms {
            Self::insert(&mut terms, m.clone(), e, 1.0);
        }
        Ok(Self::finish(&self.ctx, terms))
    }

    fn scale(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|(m, e)| (m.clone(), e.scale(s))).collect();
        Self::finish(&self.ctx, terms)
    }

    fn mul_poly(&self, p: &Polynomial) -> Result<Self, PolyError> {
        self.check(p.context())?;
        let mut terms = BTreeMap::new();
        for (m, e) in &self.terms {
            for (pm, c) in p.terms() {
                Self::insert(&mut terms, m.mul(pm)?, e, c);
            }
        }
        Ok(Self::finish(&self.ctx, terms))
    }

    fn partial(&self, index: usize) -> Result<Self, PolyError> {
        crate::poly::check_index(&self.ctx, index)?;
        let mut terms = BTreeMap::new();
        for (m, e) in &self.terms {
            let k = m.exponents()[index];
            if k == 0 {
                continue;
            }
            let mut m2 = m.clone();
            m2.set_exponent(index, k - 1);
            Self::insert(&mut terms, m2, e, k as f64);
        }
        Ok(Self::finish(&self.ctx, terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(pub usize);

impl ScalarVar {
    pub fn expr(self) -> AffineExpr {
        AffineExpr::scalar(self.0, 1.0)
    }
}

/// A polynomial decision variable: one free scalar per basis monomial.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVar {
    ctx: Context,
    degree: u32,
    basis: Vec<Monomial>,
    first: usize,
}

impl PolyVar {
    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }

    pub fn slot_count(&self) -> usize {
        self.basis.len()
    }

    pub fn scalars(&self) -> Range<usize> {
        self.first..self.first + self.basis.len()
    }

    pub fn affine(&self) -> AffinePoly {
        let terms = self.basis.iter().enumerate().map(|(k, m)| (m.clone(), AffineExpr::scalar(self.first + k, 1.0))).collect();
        AffinePoly { ctx: self.ctx.clone(), terms }
    }

    pub fn value(&self, scalars: &[f64]) -> Polynomial {
        self.affine().evaluate(scalars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarKind {
    Free,
    Nonneg,
}

#[derive(Debug, Clone, PartialEq)]
struct Assertion {
    name: String,
    expr: AffinePoly,
    set: SemialgebraicSet,
    truncation: u32,
}

/// Builder for an SOS program: `minimize objective` subject to linear
/// equalities and WSOS assertions.
#[derive(Debug, Clone, Default)]
pub struct SosProgram {
    scalars: Vec<ScalarKind>,
    assertions: Vec<Assertion>,
    linear: Vec<(AffineExpr, f64)>,
    objective: AffineExpr,
}

/// Where each piece of one assertion landed in the compiled instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AssertionLayout {
    pub name: String,
    pub truncation: u32,
    pub rows: Range<usize>,
    pub row_monomials: Vec<Monomial>,
    /// Gram blocks: the first is sigma_0, the rest follow the set's
    /// inequalities (inequalities whose degree exceeds the truncation get
    /// no multiplier and are skipped).
    pub grams: Vec<GramLayout>,
    pub equality_multipliers: Vec<EqualityLayout>,
}

impl AssertionLayout {
    /// Instance row holding the coefficient of `m`.
    pub fn row_of(&self, m: &Monomial) -> Option<usize> {
        self.row_monomials.iter().position(|r| r == m).map(|k| self.rows.start + k)
    }

    pub fn largest_gram(&self) -> usize {
        self.grams.iter().map(|g| g.basis.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramLayout {
    pub block: usize,
    pub basis: Vec<Monomial>,
    /// Index into the set's inequalities, `None` for sigma_0.
    pub weight: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityLayout {
    pub equality: usize,
    pub first_column: usize,
    pub basis: Vec<Monomial>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMap {
    /// Column of each program scalar.
    pub scalar_columns: Vec<usize>,
    pub assertions: Vec<AssertionLayout>,
    pub linear_rows: Range<usize>,
    pub objective_offset: f64,
}

impl RecoveryMap {
    /// Program scalar values from a primal solution vector.
    pub fn scalar_values(&self, x: &[f64]) -> Vec<f64> {
        self.scalar_columns.iter().map(|&c| x[c]).collect()
    }
}

/// Gram matrices and multipliers of one solved assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCertificate {
    pub grams: Vec<DMatrix<f64>>,
    pub equality_multipliers: Vec<Polynomial>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateReport {
    /// Largest absolute coefficient of `reconstruction - expression`.
    pub max_residual: f64,
    /// Smallest eigenvalue over all Gram matrices.
    pub min_eigenvalue: f64,
}

impl SosProgram {
    pub fn new() -> Self {
        SosProgram::default()
    }

    pub fn scalar_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn new_scalar(&mut self) -> ScalarVar {
        self.scalars.push(ScalarKind::Free);
        ScalarVar(self.scalars.len() - 1)
    }

    pub fn new_nonneg_scalar(&mut self) -> ScalarVar {
        self.scalars.push(ScalarKind::Nonneg);
        ScalarVar(self.scalars.len() - 1)
    }

    /// A polynomial of degree at most `degree` with free coefficients,
    /// ordered by [`monomial_basis`].
    pub fn new_poly_var(&mut self, ctx: &Context, degree: u32) -> PolyVar {
        let basis = monomial_basis(ctx.len(), degree);
        let first = self.scalars.len();
        self.scalars.extend(std::iter::repeat(ScalarKind::Free).take(basis.len()));
        PolyVar { ctx: ctx.clone(), degree, basis, first }
    }

    /// `expr = rhs`.
    pub fn add_linear_equality(&mut self, expr: AffineExpr, rhs: f64) {
        self.linear.push((expr, rhs));
    }

    /// `expr >= rhs`, through a nonnegative slack.
    pub fn add_linear_inequality(&mut self, expr: AffineExpr, rhs: f64) -> ScalarVar {
        let s = self.new_nonneg_scalar();
        self.linear.push((expr.add(&s.expr().scale(-1.0)), rhs));
        s
    }

    pub fn minimize(&mut self, objective: AffineExpr) {
        self.objective = objective;
    }

    /// Registers `expr in Sigma[set]_{<= truncation}`; returns its index.
    pub fn assert_wsos(
        &mut self,
        name: &str,
        expr: AffinePoly,
        set: &SemialgebraicSet,
        truncation: u32,
    ) -> Result<usize, SosError> {
        if expr.context() != set.context() {
            return Err(SosError::ContextMismatch(name.into()));
        }
        if truncation % 2 != 0 {
            return Err(SosError::DegreeBound {
                assertion: name.into(),
                message: format!("truncation degree {truncation} is odd"),
            });
        }
        self.assertions.push(Assertion { name: name.into(), expr, set: set.clone(), truncation });
        Ok(self.assertions.len() - 1)
    }

    pub fn compile(&self) -> Result<(SdpInstance, RecoveryMap), SosError> {
        // Columns: program scalars (free first, then nonnegative), then
        // equality multiplier coefficients (free), then Gram blocks.
        let n_free_prog = self.scalars.iter().filter(|k| **k == ScalarKind::Free).count();
        let mut scalar_columns = vec![0; self.scalars.len()];
        let (mut next_free, mut next_nn) = (0, 0);
        let mut nonneg_slots = Vec::new();
        for (i, k) in self.scalars.iter().enumerate() {
            match k {
                ScalarKind::Free => {
                    scalar_columns[i] = next_free;
                    next_free += 1;
                }
                ScalarKind::Nonneg => {
                    nonneg_slots.push((i, next_nn));
                    next_nn += 1;
                }
            }
        }

        // First pass: sizes.
        struct Plan {
            grams: Vec<(Vec<Monomial>, Option<usize>)>,
            eqs: Vec<(usize, Vec<Monomial>)>,
        }
        let mut plans = Vec::with_capacity(self.assertions.len());
        let mut eq_cols = 0usize;
        for a in &self.assertions {
            let n = a.set.context().len();
            let half = a.truncation / 2;
            let mut grams = vec![(monomial_basis(n, half), None)];
            for (j, g) in a.set.inequalities().iter().enumerate() {
                let dg = g.degree();
                if dg <= a.truncation {
                    grams.push((monomial_basis(n, (a.truncation - dg) / 2), Some(j)));
                }
            }
            let mut eqs = Vec::new();
            for (i, h) in a.set.equalities().iter().enumerate() {
                let dh = h.degree();
                if dh <= a.truncation {
                    let basis = monomial_basis(n, a.truncation - dh);
                    eq_cols += basis.len();
                    eqs.push((i, basis));
                }
            }
            plans.push(Plan { grams, eqs });
        }
        let free_total = n_free_prog + eq_cols;
        let psd: Vec<usize> = plans.iter().flat_map(|p| p.grams.iter().map(|g| g.0.len())).collect();
        let layout = ConeLayout { free: free_total, nonneg: next_nn, psd };
        for (i, slot) in nonneg_slots {
            scalar_columns[i] = free_total + slot;
        }
        let mut inst = SdpInstance::new(layout.clone());
        for (k, v) in &self.objective.linear {
            inst.c[scalar_columns[*k]] += v;
        }

        let affine_row = |e: &AffineExpr| -> SparseRow { e.linear.iter().map(|(&k, &v)| (scalar_columns[k], v)).collect() };

        let mut layouts = Vec::with_capacity(self.assertions.len());
        let mut block = 0usize;
        let mut eq_next = n_free_prog;
        for (a, plan) in self.assertions.iter().zip(plans) {
            let mut rows: BTreeMap<Monomial, (SparseRow, f64)> = BTreeMap::new();
            for (m, e) in a.expr.terms() {
                let entry = rows.entry(m.clone()).or_default();
                entry.0.extend(affine_row(e));
                entry.1 -= e.constant;
            }
            let mut grams = Vec::with_capacity(plan.grams.len());
            for (basis, weight) in plan.grams {
                let off = layout.psd_offset(block);
                let weight_poly = weight.map(|j| &a.set.inequalities()[j]);
                for q in 0..basis.len() {
                    for p in 0..=q {
                        let prod = basis[p].mul(&basis[q])?;
                        let scale = if p == q { 1.0 } else { SQRT_2 };
                        let col = off + svec_index(p, q);
                        match weight_poly {
                            None => rows.entry(prod).or_default().0.push((col, -scale)),
                            Some(g) => {
                                for (gm, gc) in g.terms() {
                                    rows.entry(prod.mul(gm)?).or_default().0.push((col, -scale * gc));
                                }
                            }
                        }
                    }
                }
                grams.push(GramLayout { block, basis, weight });
                block += 1;
            }
            let mut equality_multipliers = Vec::with_capacity(plan.eqs.len());
            for (i, basis) in plan.eqs {
                let h = &a.set.equalities()[i];
                for (k, bm) in basis.iter().enumerate() {
                    for (hm, hc) in h.terms() {
                        rows.entry(bm.mul(hm)?).or_default().0.push((eq_next + k, -hc));
                    }
                }
                equality_multipliers.push(EqualityLayout { equality: i, first_column: eq_next, basis: basis.clone() });
                eq_next += basis.len();
            }

            let start = inst.rows.len();
            let mut row_monomials = Vec::with_capacity(rows.len());
            for (m, (row, rhs)) in rows {
                let row: SparseRow = row.into_iter().filter(|e| e.1 != 0.0).collect();
                if row.is_empty() {
                    if rhs != 0.0 {
                        let mut text = String::new();
                        let _ = crate::poly::write_monomial(&mut text, a.set.context(), &m);
                        return Err(SosError::DegreeBound {
                            assertion: a.name.clone(),
                            message: format!(
                                "constant coefficient {rhs} on `{text}` exceeds truncation degree {} and cannot be matched",
                                a.truncation
                            ),
                        });
                    }
                    continue;
                }
                inst.push_row(row, rhs);
                row_monomials.push(m);
            }
            layouts.push(AssertionLayout {
                name: a.name.clone(),
                truncation: a.truncation,
                rows: start..inst.rows.len(),
                row_monomials,
                grams,
                equality_multipliers,
            });
        }
        let lin_start = inst.rows.len();
        for (e, rhs) in &self.linear {
            inst.push_row(affine_row(e), rhs - e.constant);
        }
        let linear_rows = lin_start..inst.rows.len();
        Ok((inst, RecoveryMap { scalar_columns, assertions: layouts, linear_rows, objective_offset: self.objective.constant }))
    }

    /// Gram matrices and multipliers of assertion `index` read from `x`.
    pub fn certificate(&self, map: &RecoveryMap, layout: &ConeLayout, x: &[f64], index: usize) -> SosCertificate {
        let al = &map.assertions[index];
        let ctx = self.assertions[index].set.context();
        let grams = al
            .grams
            .iter()
            .map(|g| {
                let off = layout.psd_offset(g.block);
                svec_to_matrix(&x[off..off + svec_len(g.basis.len())], g.basis.len())
            })
            .collect();
        let equality_multipliers = al
            .equality_multipliers
            .iter()
            .map(|e| {
                Polynomial::from_terms(ctx, e.basis.iter().enumerate().map(|(k, m)| (m.clone(), x[e.first_column + k])))
                    .expect("basis matches context")
            })
            .collect();
        SosCertificate { grams, equality_multipliers }
    }

    /// Rebuilds `sigma_0 + sum sigma_j g_j + sum lambda_i h_i` and compares it
    /// with the asserted expression at the given scalar values.
    pub fn verify_certificate(
        &self,
        map: &RecoveryMap,
        index: usize,
        cert: &SosCertificate,
        scalars: &[f64],
    ) -> Result<CertificateReport, SosError> {
        let a = &self.assertions[index];
        let al = &map.assertions[index];
        if cert.grams.len() != al.grams.len() || cert.equality_multipliers.len() != al.equality_multipliers.len() {
            return Err(SosError::ShapeMismatch(a.name.clone()));
        }
        let ctx = a.set.context();
        let mut recon = Polynomial::zero(ctx);
        let mut min_eig = f64::INFINITY;
        for (g, q) in al.grams.iter().zip(&cert.grams) {
            if q.nrows() != g.basis.len() || q.ncols() != g.basis.len() {
                return Err(SosError::ShapeMismatch(a.name.clone()));
            }
            min_eig = min_eig.min(crate::sdp::dense::min_eigenvalue(q));
            let mut terms = Vec::with_capacity(g.basis.len() * g.basis.len());
            for i in 0..g.basis.len() {
                for j in 0..g.basis.len() {
                    terms.push((g.basis[i].mul(&g.basis[j])?, q[(i, j)]));
                }
            }
            let sigma = Polynomial::from_terms(ctx, terms)?;
            recon = recon.add(&match g.weight {
                None => sigma,
                Some(j) => sigma.mul(&a.set.inequalities()[j])?,
            })?;
        }
        for (e, lam) in al.equality_multipliers.iter().zip(&cert.equality_multipliers) {
            recon = recon.add(&lam.mul(&a.set.equalities()[e.equality])?)?;
        }
        let diff = recon.sub(&a.expr.evaluate(scalars))?;
        Ok(CertificateReport { max_residual: diff.max_abs_coefficient(), min_eigenvalue: min_eig })
    }

    pub fn assertion_count(&self) -> usize {
        self.assertions.len()
    }

    pub fn assertion_name(&self, index: usize) -> &str {
        &self.assertions[index].name
    }

    pub fn assertion_set(&self, index: usize) -> &SemialgebraicSet {
        &self.assertions[index].set
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_polynomial;
    use crate::poly::VariableContext;
    use crate::sdp::{solve, SolveSettings, Status};

    fn unit_interval() -> (Context, SemialgebraicSet) {
        let c = VariableContext::new(["x"]).unwrap();
        let s = SemialgebraicSet::new(
            &c,
            vec![parse_polynomial("x", &c).unwrap(), parse_polynomial("1 - x", &c).unwrap()],
            vec![],
            None,
        )
        .unwrap();
        (c, s)
    }

    #[test]
    fn poly_var_slot_counts() {
        let mut prog = SosProgram::new();
        let c3 = VariableContext::new(["t", "x1", "x2"]).unwrap();
        assert_eq!(prog.new_poly_var(&c3, 2).slot_count(), 10);
        assert_eq!(prog.new_poly_var(&c3, 4).slot_count(), 35);
        let c1 = VariableContext::new(["x"]).unwrap();
        assert_eq!(prog.new_poly_var(&c1, 0).slot_count(), 1);
        let c4 = VariableContext::new(["a", "b", "c", "d"]).unwrap();
        assert_eq!(prog.new_poly_var(&c4, 6).slot_count(), 210);
    }

    #[test]
    fn max_of_x_on_unit_interval() {
        let (c, set) = unit_interval();
        let mut prog = SosProgram::new();
        let g = prog.new_scalar();
        let theta = AffinePoly::from_affine(&c, g.expr()).sub(&AffinePoly::from_poly(&parse_polynomial("x", &c).unwrap())).unwrap();
        prog.assert_wsos("upper", theta, &set, 2).unwrap();
        prog.minimize(g.expr());
        let (inst, map) = prog.compile().unwrap();
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-7, "{}", sol.primal_objective);
        let vals = map.scalar_values(&sol.x);
        let cert = prog.certificate(&map, &inst.layout, &sol.x, 0);
        let rep = prog.verify_certificate(&map, 0, &cert, &vals).unwrap();
        assert!(rep.max_residual < 1e-6 && rep.min_eigenvalue > -1e-8, "{rep:?}");
    }

    #[test]
    fn hand_built_certificate_verifies() {
        // x = 0 + 1 * x + 0 * (1 - x) on [0, 1].
        let (c, set) = unit_interval();
        let mut prog = SosProgram::new();
        let theta = AffinePoly::from_poly(&parse_polynomial("x", &c).unwrap());
        prog.assert_wsos("x", theta, &set, 2).unwrap();
        let (_, map) = prog.compile().unwrap();
        let al = &map.assertions[0];
        assert_eq!(al.grams.len(), 3);
        assert_eq!(al.grams[0].basis.len(), 2);
        assert_eq!(al.grams[1].basis.len(), 1);
        let cert = SosCertificate {
            grams: vec![DMatrix::zeros(2, 2), DMatrix::from_element(1, 1, 1.0), DMatrix::zeros(1, 1)],
            equality_multipliers: vec![],
        };
        let rep = prog.verify_certificate(&map, 0, &cert, &[]).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!(rep.min_eigenvalue >= 0.0);
        let mut bad = cert.clone();
        bad.grams[0][(1, 1)] += 1e-3;
        let rep = prog.verify_certificate(&map, 0, &bad, &[]).unwrap();
        assert!((rep.max_residual - 1e-3).abs() < 1e-12);
        let short = SosCertificate { grams: vec![], equality_multipliers: vec![] };
        assert!(prog.verify_certificate(&map, 0, &short, &[]).is_err());
    }

    #[test]
    fn negative_polynomial_is_infeasible() {
        let (c, set) = unit_interval();
        for trunc in [2, 4] {
            let mut prog = SosProgram::new();
            prog.assert_wsos("neg", AffinePoly::from_poly(&parse_polynomial("x - 2", &c).unwrap()), &set, trunc).unwrap();
            let (inst, _) = prog.compile().unwrap();
            let sol = solve(&inst, &SolveSettings::default()).unwrap();
            assert_eq!(sol.status, Status::PrimalInfeasible, "truncation {trunc}");
        }
    }

    #[test]
    fn constant_on_box() {
        let c = VariableContext::new(["x1", "x2"]).unwrap();
        let b = SemialgebraicSet::boxed(&c, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut prog = SosProgram::new();
        prog.assert_wsos("one", AffinePoly::from_poly(&Polynomial::constant(&c, 1.0)), &b, 0).unwrap();
        let (inst, map) = prog.compile().unwrap();
        assert_eq!(inst.layout.psd, vec![1]);
        assert_eq!(map.assertions[0].grams.len(), 1);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn linear_rows_only() {
        let mut prog = SosProgram::new();
        let g = prog.new_scalar();
        prog.add_linear_inequality(g.expr(), 5.0);
        prog.minimize(g.expr());
        let (inst, map) = prog.compile().unwrap();
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((map.scalar_values(&sol.x)[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn equality_multipliers_are_free() {
        // 1 - x^2 - y on {y = 0} intersected with the disc: needs the multiplier.
        let c = VariableContext::new(["x", "y"]).unwrap();
        let set = SemialgebraicSet::new(
            &c,
            vec![parse_polynomial("1 - x^2 - y^2", &c).unwrap()],
            vec![parse_polynomial("y", &c).unwrap()],
            None,
        )
        .unwrap();
        let mut prog = SosProgram::new();
        let g = prog.new_scalar();
        let theta = AffinePoly::from_affine(&c, g.expr())
            .sub(&AffinePoly::from_poly(&parse_polynomial("y + x", &c).unwrap()))
            .unwrap();
        prog.assert_wsos("slice", theta, &set, 2).unwrap();
        prog.minimize(g.expr());
        let (inst, map) = prog.compile().unwrap();
        assert_eq!(map.assertions[0].equality_multipliers[0].basis.len(), 3);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-6, "{}", sol.primal_objective);
    }

    #[test]
    fn rows_above_truncation_force_coefficients() {
        let (c, set) = unit_interval();
        let mut prog = SosProgram::new();
        let v = prog.new_poly_var(&c, 3);
        prog.assert_wsos("v", v.affine(), &set, 2).unwrap();
        let (inst, map) = prog.compile().unwrap();
        // Rows for 1, x, x^2 and the forced x^3 row.
        assert_eq!(map.assertions[0].row_monomials.len(), 4);
        let forced = map.assertions[0].rows.end - 1;
        assert_eq!(inst.rows[forced], vec![(3, 1.0)]);
        assert_eq!(inst.b[forced], 0.0);

        let mut bad = SosProgram::new();
        bad.assert_wsos("cubic", AffinePoly::from_poly(&parse_polynomial("x^3", &c).unwrap()), &set, 2).unwrap();
        assert!(matches!(bad.compile(), Err(SosError::DegreeBound { .. })));
        let mut odd = SosProgram::new();
        assert!(odd.assert_wsos("odd", AffinePoly::zero(&c), &set, 3).is_err());
    }

    #[test]
    fn compilation_is_deterministic() {
        let (c, set) = unit_interval();
        let build = || {
            let mut prog = SosProgram::new();
            let g = prog.new_scalar();
            let v = prog.new_poly_var(&c, 2);
            let theta = AffinePoly::from_affine(&c, g.expr()).sub(&v.affine()).unwrap();
            prog.assert_wsos("a", theta, &set, 4).unwrap();
            prog.assert_wsos("b", v.affine(), &set, 2).unwrap();
            prog.minimize(g.expr());
            prog.compile().unwrap().0
        };
        assert_eq!(crate::sdp::sdpa::to_sdpa_string(&build()), crate::sdp::sdpa::to_sdpa_string(&build()));
    }

    #[test]
    fn affine_poly_operations() {
        let c = VariableContext::new(["t", "x"]).unwrap();
        let mut prog = SosProgram::new();
        let v = prog.new_poly_var(&c, 2);
        let vals: Vec<f64> = (0..v.slot_count()).map(|k| k as f64 + 1.0).collect();
        let concrete = v.value(&vals);
        let p = parse_polynomial("1 + 2*t*x", &c).unwrap();
        let lhs = v.affine().mul_poly(&p).unwrap().partial(1).unwrap().evaluate(&vals);
        let rhs = concrete.mul(&p).unwrap().partial(1).unwrap();
        assert_eq!(lhs, rhs);
        let at0 = v.affine().substitute(0, 0.0).unwrap().evaluate(&vals);
        assert_eq!(at0, concrete.substitute(0, 0.0).unwrap());
        let xs = VariableContext::new(["x"]).unwrap();
        let moved = v.affine().substitute(0, 0.0).unwrap().embed_into(&xs).unwrap();
        assert_eq!(moved.degree(), 2);
        assert!(v.affine().embed_into(&xs).is_err());
    }
}
