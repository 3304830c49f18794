//! Sparse multivariate polynomials over a named, ordered variable context.
//!
//! Every polynomial carries a shared [`Context`] that fixes the meaning of
//! each exponent slot. Coefficients are `f64`; terms whose magnitude drops
//! below [`PRUNE_THRESHOLD`] after arithmetic are removed so that sparsity
//! reflects the actual support.
//!
//! Monomials are ordered graded-lexicographically: lower total degree first,
//! and within one degree the larger exponent on an earlier variable comes
//! first (`1, x1, x2, x1^2, x1*x2, x2^2, ...`). This is the single canonical
//! order used for Gram bases and constraint rows throughout the crate.

use smallvec::SmallVec;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Coefficients with magnitude below this are dropped after arithmetic.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("operands live in different variable contexts")]
    ContextMismatch,
    #[error("variable index {index} out of range for a context of {count} variables")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("point has {got} coordinates but the context has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("monomial exponent exceeds 255")]
    ExponentOverflow,
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` does not exist in the target context")]
    MissingVariable(String),
}

/// Ordered, uniquely named indeterminates.
///
/// When built with [`VariableContext::with_time`], index 0 is the time
/// variable and the state variables follow in order.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct VariableContext {
    names: Vec<String>,
    has_time: bool,
}

pub type Context = Arc<VariableContext>;

impl VariableContext {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Context, PolyError> {
        Self::build(names.into_iter().map(Into::into).collect(), false)
    }

    /// Context `(time, states...)` with the time variable at index 0.
    pub fn with_time<S: AsRef<str>>(time: &str, states: &[S]) -> Result<Context, PolyError> {
        let mut names = vec![time.to_string()];
        names.extend(states.iter().map(|s| s.as_ref().to_string()));
        Self::build(names, true)
    }

    fn build(names: Vec<String>, has_time: bool) -> Result<Context, PolyError> {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PolyError::DuplicateVariable(n.clone()));
            }
        }
        Ok(Arc::new(VariableContext { names, has_time }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_time(&self) -> bool {
        self.has_time
    }
}

pub(crate) fn same_context(a: &Context, b: &Context) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Exponent vector; its length always equals the owning context's size.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(SmallVec<[u8; 8]>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(SmallVec::from_elem(0, nvars))
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        let mut m = Self::one(nvars);
        m.0[index] = 1;
        m
    }

    pub fn from_exponents(exps: &[u32]) -> Result<Self, PolyError> {
        exps.iter()
            .map(|&e| u8::try_from(e).map_err(|_| PolyError::ExponentOverflow))
            .collect::<Result<SmallVec<_>, _>>()
            .map(Monomial)
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Result<Monomial, PolyError> {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.checked_add(*b).ok_or(PolyError::ExponentOverflow))
            .collect::<Result<SmallVec<_>, _>>()
            .map(Monomial)
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    pub(crate) fn set_exponent(&mut self, index: usize, e: u8) {
        self.0[index] = e;
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `nvars` variables of total degree at most `degree`, in
/// graded-lex order. The length is `C(nvars + degree, degree)`.
pub fn monomial_basis(nvars: usize, degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut buf = vec![0u8; nvars];
    for d in 0..=degree {
        push_compositions(&mut buf, 0, d, &mut out);
    }
    out
}

fn push_compositions(buf: &mut [u8], pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if pos + 1 >= buf.len() {
        if buf.is_empty() {
            if remaining == 0 {
                out.push(Monomial(SmallVec::new()));
            }
            return;
        }
        buf[pos] = remaining as u8;
        out.push(Monomial(SmallVec::from_slice(buf)));
        buf[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e as u8;
        push_compositions(buf, pos + 1, remaining - e, out);
    }
    buf[pos] = 0;
}

/// Binomial coefficient `C(n, k)` as `usize`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

#[derive(Clone, Debug)]
pub struct Polynomial {
    ctx: Context,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        same_context(&self.ctx, &other.ctx) && self.terms == other.terms
    }
}

fn prune(terms: &mut BTreeMap<Monomial, f64>) {
    terms.retain(|_, c| c.abs() >= PRUNE_THRESHOLD);
}

impl Polynomial {
    pub fn zero(ctx: &Context) -> Self {
        Polynomial { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Context, c: f64) -> Self {
        Self::term(ctx, Monomial::one(ctx.len()), c)
    }

    pub fn var(ctx: &Context, index: usize) -> Result<Self, PolyError> {
        check_index(ctx, index)?;
        Ok(Self::term(ctx, Monomial::var(ctx.len(), index), 1.0))
    }

    pub fn term(ctx: &Context, mono: Monomial, c: f64) -> Self {
        assert_eq!(mono.len(), ctx.len(), "monomial length must match context");
        let mut terms = BTreeMap::new();
        if c.abs() >= PRUNE_THRESHOLD {
            terms.insert(mono, c);
        }
        Polynomial { ctx: ctx.clone(), terms }
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing
    /// duplicates.
    pub fn from_terms(
        ctx: &Context,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Result<Self, PolyError> {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            if m.len() != ctx.len() {
                return Err(PolyError::LengthMismatch { expected: ctx.len(), got: m.len() });
            }
            *map.entry(m).or_insert(0.0) += c;
        }
        prune(&mut map);
        Ok(Polynomial { ctx: ctx.clone(), terms: map })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn coefficient(&self, mono: &Monomial) -> f64 {
        self.terms.get(mono).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum total degree over stored terms; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn check_ctx(&self, other: &Polynomial) -> Result<(), PolyError> {
        if same_context(&self.ctx, &other.ctx) {
            Ok(())
        } else {
            Err(PolyError::ContextMismatch)
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_ctx(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        prune(&mut terms);
        Ok(Polynomial { ctx: self.ctx.clone(), terms })
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut terms: BTreeMap<_, _> =
            self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect();
        prune(&mut terms);
        Polynomial { ctx: self.ctx.clone(), terms }
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_ctx(other)?;
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)?).or_insert(0.0) += ca * cb;
            }
        }
        prune(&mut terms);
        Ok(Polynomial { ctx: self.ctx.clone(), terms })
    }

    pub fn pow(&self, e: u32) -> Result<Polynomial, PolyError> {
        let mut acc = Polynomial::constant(&self.ctx, 1.0);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Formal partial derivative with respect to variable `index`.
    pub fn partial(&self, index: usize) -> Result<Polynomial, PolyError> {
        check_index(&self.ctx, index)?;
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.exponents()[index];
            if e == 0 {
                continue;
            }
            let mut d = m.clone();
            d.set_exponent(index, e - 1);
            *terms.entry(d).or_insert(0.0) += c * e as f64;
        }
        prune(&mut terms);
        Ok(Polynomial { ctx: self.ctx.clone(), terms })
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.ctx.len() {
            return Err(PolyError::LengthMismatch { expected: self.ctx.len(), got: point.len() });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.evaluate(point)).sum())
    }

    /// Replaces variable `index` by the constant `value`; the context is kept.
    pub fn substitute(&self, index: usize, value: f64) -> Result<Polynomial, PolyError> {
        check_index(&self.ctx, index)?;
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.exponents()[index];
            let mut r = m.clone();
            r.set_exponent(index, 0);
            *terms.entry(r).or_insert(0.0) += c * value.powi(e as i32);
        }
        prune(&mut terms);
        Ok(Polynomial { ctx: self.ctx.clone(), terms })
    }

    /// Re-expresses this polynomial in `target`, matching variables by name.
    /// Only variables that actually occur need to exist in `target`.
    pub fn embed_into(&self, target: &Context) -> Result<Polynomial, PolyError> {
        let map = variable_map(&self.ctx, target)?;
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            *terms.entry(remap_monomial(m, &map, &self.ctx, target)?).or_insert(0.0) += c;
        }
        Ok(Polynomial { ctx: target.clone(), terms })
    }
}

pub(crate) fn check_index(ctx: &Context, index: usize) -> Result<(), PolyError> {
    if index < ctx.len() {
        Ok(())
    } else {
        Err(PolyError::IndexOutOfRange { index, count: ctx.len() })
    }
}

pub(crate) fn variable_map(from: &Context, to: &Context) -> Result<Vec<Option<usize>>, PolyError> {
    Ok(from.names().iter().map(|n| to.index_of(n)).collect())
}

pub(crate) fn remap_monomial(
    m: &Monomial,
    map: &[Option<usize>],
    from: &Context,
    to: &Context,
) -> Result<Monomial, PolyError> {
    let mut out = Monomial::one(to.len());
    for (i, &e) in m.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        match map[i] {
            Some(j) => out.set_exponent(j, e),
            None => return Err(PolyError::MissingVariable(from.name(i).to_string())),
        }
    }
    Ok(out)
}

/// Operations shared by concrete polynomials and polynomials whose
/// coefficients are affine in decision variables. Lie derivatives and the
/// other dynamics builders are written against this trait.
pub trait PolyOps: Sized {
    fn context(&self) -> &Context;
    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Result<Self, PolyError>;
    fn scale(&self, s: f64) -> Self;
    fn mul_poly(&self, p: &Polynomial) -> Result<Self, PolyError>;
    fn partial(&self, index: usize) -> Result<Self, PolyError>;

    fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.scale(-1.0))
    }
}

impl PolyOps for Polynomial {
    fn context(&self) -> &Context {
        &self.ctx
    }
    fn zero_like(&self) -> Self {
        Polynomial::zero(&self.ctx)
    }
    fn add(&self, other: &Self) -> Result<Self, PolyError> {
        Polynomial::add(self, other)
    }
    fn scale(&self, s: f64) -> Self {
        Polynomial::scale(self, s)
    }
    fn mul_poly(&self, p: &Polynomial) -> Result<Self, PolyError> {
        self.mul(p)
    }
    fn partial(&self, index: usize) -> Result<Self, PolyError> {
        Polynomial::partial(self, index)
    }
}

pub(crate) fn write_monomial(f: &mut impl fmt::Write, ctx: &Context, m: &Monomial) -> fmt::Result {
    let mut first = true;
    for (i, &e) in m.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        if !first {
            f.write_char('*')?;
        }
        first = false;
        f.write_str(ctx.name(i))?;
        if e > 1 {
            write!(f, "^{e}")?;
        }
    }
    Ok(())
}

/// Canonical text form, parseable by [`crate::expr::parse_polynomial`].
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c < 0.0 {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if c < 0.0 { " - " } else { " + " })?;
            }
            if m.degree() == 0 {
                write!(f, "{mag}")?;
            } else {
                if mag != 1.0 {
                    write!(f, "{mag}*")?;
                }
                write_monomial(f, &self.ctx, m)?;
            }
        }
        Ok(())
    }
}
