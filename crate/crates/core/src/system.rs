//! Rational dynamics `f = f0 + sum_l N_l / D_l` and the peak problem.

use crate::poly::{Context, PolyError, PolyOps, Polynomial, VariableContext};
use crate::semialg::{SemialgebraicSet, SetError};
use thiserror::Error;

/// Denominators smaller than this in magnitude are treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("dynamics context must start with a time variable")]
    MissingTime,
    #[error("{what} has {got} entries, expected {expected}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("denominator of term {0} is identically zero")]
    ZeroDenominator(usize),
    #[error("rational term index {index} out of range (L = {count})")]
    TermIndex { index: usize, count: usize },
    #[error("the system has no rational terms")]
    NoRationalTerms,
    #[error("denominator of term {term} is {value:e} at t = {t}, x = {x:?}")]
    Singularity { term: usize, t: f64, x: Vec<f64>, value: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("{0} must be described in the state variables only")]
    NotStateOnly(&'static str),
    #[error("state space needs a bounding box for gridding")]
    NoBounds,
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
}

/// One summand `N / D` of the vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTerm {
    pub numerator: Vec<Polynomial>,
    pub denominator: Polynomial,
}

impl RationalTerm {
    pub fn numerator_degree(&self) -> u32 {
        self.numerator.iter().map(Polynomial::degree).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalDynamics {
    ctx: Context,
    f0: Vec<Polynomial>,
    terms: Vec<RationalTerm>,
}

fn check_ctx(p: &Polynomial, ctx: &Context) -> Result<(), SystemError> {
    if p.context() != ctx {
        return Err(PolyError::ContextMismatch.into());
    }
    Ok(())
}

impl RationalDynamics {
    /// `ctx` is `(t, x1..xn)`; every polynomial must live in it.
    pub fn new(ctx: &Context, f0: Vec<Polynomial>, terms: Vec<RationalTerm>) -> Result<Self, SystemError> {
        if !ctx.has_time() {
            return Err(SystemError::MissingTime);
        }
        let n = ctx.len() - 1;
        if f0.len() != n {
            return Err(SystemError::DimensionMismatch { what: "f0".into(), expected: n, got: f0.len() });
        }
        for p in &f0 {
            check_ctx(p, ctx)?;
        }
        for (l, term) in terms.iter().enumerate() {
            if term.numerator.len() != n {
                return Err(SystemError::DimensionMismatch {
                    what: format!("numerator of term {l}"),
                    expected: n,
                    got: term.numerator.len(),
                });
            }
            for p in term.numerator.iter().chain(std::iter::once(&term.denominator)) {
                check_ctx(p, ctx)?;
            }
            if term.denominator.is_zero() {
                return Err(SystemError::ZeroDenominator(l));
            }
        }
        Ok(RationalDynamics { ctx: ctx.clone(), f0, terms })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    /// Number of state coordinates.
    pub fn dim(&self) -> usize {
        self.f0.len()
    }

    pub fn f0(&self) -> &[Polynomial] {
        &self.f0
    }

    pub fn terms(&self) -> &[RationalTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn term(&self, l: usize) -> Result<&RationalTerm, SystemError> {
        self.terms.get(l).ok_or(SystemError::TermIndex { index: l, count: self.terms.len() })
    }

    pub fn f0_degree(&self) -> u32 {
        self.f0.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// Moves a polynomial of this system into `target` (no-op if equal).
    fn lift(&self, p: &Polynomial, target: &Context) -> Result<Polynomial, SystemError> {
        if target == &self.ctx {
            Ok(p.clone())
        } else {
            Ok(p.embed_into(target)?)
        }
    }

    /// `dv/dt + f0 . grad_x v`. `v` may live in any context that contains
    /// this system's variables under the same names.
    pub fn lie_f0<P: PolyOps>(&self, v: &P) -> Result<P, SystemError> {
        let target = v.context().clone();
        let time = target.index_of(self.ctx.name(0)).ok_or(PolyError::MissingVariable(self.ctx.name(0).into()))?;
        let mut acc = v.partial(time)?;
        for (i, fi) in self.f0.iter().enumerate() {
            if fi.is_zero() {
                continue;
            }
            let xi = self.state_index(&target, i)?;
            acc = acc.add(&v.partial(xi)?.mul_poly(&self.lift(fi, &target)?)?)?;
        }
        Ok(acc)
    }

    /// `N_l . grad_x v`, with `l` zero-based.
    pub fn numerator_dot_grad<P: PolyOps>(&self, l: usize, v: &P) -> Result<P, SystemError> {
        let term = self.term(l)?;
        let target = v.context().clone();
        let mut acc = v.zero_like();
        for (i, ni) in term.numerator.iter().enumerate() {
            if ni.is_zero() {
                continue;
            }
            let xi = self.state_index(&target, i)?;
            acc = acc.add(&v.partial(xi)?.mul_poly(&self.lift(ni, &target)?)?)?;
        }
        Ok(acc)
    }

    fn state_index(&self, target: &Context, i: usize) -> Result<usize, SystemError> {
        let name = self.ctx.name(i + 1);
        Ok(target.index_of(name).ok_or_else(|| PolyError::MissingVariable(name.into()))?)
    }

    /// `eps_l = max(deg D_l, deg N_l - 1)`, with `deg N_l` the largest
    /// coordinate degree.
    pub fn epsilon_degree(&self, l: usize) -> Result<u32, SystemError> {
        let term = self.term(l)?;
        Ok(term.denominator.degree().max(term.numerator_degree().saturating_sub(1)))
    }

    /// `Y = max(deg f0 - 1, max_l deg N_l)`.
    pub fn lift_degree_y(&self) -> u32 {
        let n = self.terms.iter().map(RationalTerm::numerator_degree).max().unwrap_or(0);
        self.f0_degree().saturating_sub(1).max(n)
    }

    /// `Phi = prod_l D_l` and `Phi_l = prod_{l' != l} D_l'`.
    pub fn clearing_polys(&self) -> Result<(Polynomial, Vec<Polynomial>), SystemError> {
        if self.terms.is_empty() {
            return Err(SystemError::NoRationalTerms);
        }
        let one = Polynomial::constant(&self.ctx, 1.0);
        let mut phi = one.clone();
        for t in &self.terms {
            phi = phi.mul(&t.denominator)?;
        }
        let mut others = Vec::with_capacity(self.terms.len());
        for l in 0..self.terms.len() {
            let mut p = one.clone();
            for (m, t) in self.terms.iter().enumerate() {
                if m != l {
                    p = p.mul(&t.denominator)?;
                }
            }
            others.push(p);
        }
        Ok((phi, others))
    }

    /// `f(t, x)`; errors if any denominator is (numerically) zero.
    pub fn evaluate_rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_rhs_into(t, x, &mut out)?;
        Ok(out)
    }

    pub(crate) fn evaluate_rhs_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        let n = self.dim();
        if x.len() != n {
            return Err(SystemError::DimensionMismatch { what: "state".into(), expected: n, got: x.len() });
        }
        let mut point = Vec::with_capacity(n + 1);
        point.push(t);
        point.extend_from_slice(x);
        for (o, f) in out.iter_mut().zip(&self.f0) {
            *o = f.evaluate(&point)?;
        }
        for (l, term) in self.terms.iter().enumerate() {
            let d = term.denominator.evaluate(&point)?;
            if !(d.abs() >= SINGULARITY_THRESHOLD) {
                return Err(SystemError::Singularity { term: l, t, x: x.to_vec(), value: d });
            }
            for (o, nm) in out.iter_mut().zip(&term.numerator) {
                *o += nm.evaluate(&point)? / d;
            }
        }
        Ok(())
    }

    /// Replaces `t` by `scale * s` and multiplies the field by `scale`.
    fn rescaled(&self, scale: f64) -> Result<Self, SystemError> {
        let sub = |p: &Polynomial| scale_variable(p, 0, scale);
        let f0 = self.f0.iter().map(|p| Ok(sub(p)?.scale(scale))).collect::<Result<_, SystemError>>()?;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(RationalTerm {
                    numerator: t.numerator.iter().map(|p| Ok(sub(p)?.scale(scale))).collect::<Result<_, SystemError>>()?,
                    denominator: sub(&t.denominator)?,
                })
            })
            .collect::<Result<_, SystemError>>()?;
        RationalDynamics::new(&self.ctx, f0, terms)
    }
}

/// `p(..., scale * x_index, ...)`.
pub fn scale_variable(p: &Polynomial, index: usize, scale: f64) -> Result<Polynomial, PolyError> {
    Polynomial::from_terms(
        p.context(),
        p.terms().map(|(m, c)| (m.clone(), c * scale.powi(m.exponents()[index] as i32))),
    )
}

/// A peak estimation problem: bound `sup p(x(t))` over `t in [0, T]` and
/// `x(0) in X0`, with trajectories confined to `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakProblem {
    pub dynamics: RationalDynamics,
    pub state_space: SemialgebraicSet,
    pub initial_set: SemialgebraicSet,
    pub horizon: f64,
    pub objective: Polynomial,
    state_ctx: Context,
}

impl PeakProblem {
    /// `state_space`, `initial_set` and `objective` must use the state-only
    /// context (the dynamics context minus its time variable).
    pub fn new(
        dynamics: RationalDynamics,
        state_space: SemialgebraicSet,
        initial_set: SemialgebraicSet,
        horizon: f64,
        objective: Polynomial,
    ) -> Result<Self, SystemError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SystemError::BadHorizon(horizon));
        }
        let state_ctx = objective.context().clone();
        let expected = &dynamics.context().names()[1..];
        if state_ctx.names() != expected {
            return Err(SystemError::NotStateOnly("objective"));
        }
        if state_space.context() != &state_ctx {
            return Err(SystemError::NotStateOnly("state space"));
        }
        if initial_set.context() != &state_ctx {
            return Err(SystemError::NotStateOnly("initial set"));
        }
        Ok(PeakProblem { dynamics, state_space, initial_set, horizon, objective, state_ctx })
    }

    pub fn state_context(&self) -> &Context {
        &self.state_ctx
    }

    pub fn time_state_context(&self) -> &Context {
        self.dynamics.context()
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    /// Equivalent problem on `[0, 1]` via `t = T s`.
    pub fn rescale_time(&self) -> Result<Self, SystemError> {
        let dynamics = self.dynamics.rescaled(self.horizon)?;
        PeakProblem::new(dynamics, self.state_space.clone(), self.initial_set.clone(), 1.0, self.objective.clone())
    }

    /// `[0, T] x X` in the `(t, x)` context.
    pub fn time_state_set(&self) -> Result<SemialgebraicSet, SystemError> {
        Ok(self.state_space.times_interval(self.dynamics.context(), self.horizon)?)
    }

    /// Grid points `(t, x)` covering `[0, T] x X` with `resolution` nodes per
    /// axis, filtered by membership in `X`.
    pub fn time_state_grid(&self, resolution: usize) -> Result<Vec<Vec<f64>>, SystemError> {
        if resolution < 2 {
            return Err(SystemError::Resolution(resolution));
        }
        let (lo, hi) = self.state_space.bounds().ok_or(SystemError::NoBounds)?;
        let mut axes = vec![linspace(0.0, self.horizon, resolution)];
        for (l, h) in lo.iter().zip(hi) {
            axes.push(if l == h { vec![*l] } else { linspace(*l, *h, resolution) });
        }
        let mut out = Vec::new();
        for point in cartesian(&axes) {
            if self.state_space.contains(&point[1..], 1e-9)? {
                out.push(point);
            }
        }
        Ok(out)
    }

    /// Minimum and maximum of `D_l` sampled on [`Self::time_state_grid`].
    pub fn denominator_range(&self, l: usize, resolution: usize) -> Result<(f64, f64), SystemError> {
        let d = &self.dynamics.term(l)?.denominator;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in self.time_state_grid(resolution)? {
            let v = d.evaluate(&p)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Context `(t, x, y_1..y_L)` for the lifted formulation. Lifted names
    /// avoid collisions with existing variables.
    pub fn lifted_context(&self) -> Result<Context, SystemError> {
        let base = self.dynamics.context();
        let mut names: Vec<String> = base.names().to_vec();
        let mut prefix = String::from("y");
        while (1..=self.dynamics.num_terms()).any(|l| base.index_of(&format!("{prefix}{l}")).is_some()) {
            prefix.insert(0, '_');
        }
        names.extend((1..=self.dynamics.num_terms()).map(|l| format!("{prefix}{l}")));
        let states: Vec<&str> = names[1..].iter().map(String::as_str).collect();
        Ok(VariableContext::with_time(&names[0], &states)?)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// Row-major cartesian product (last axis fastest).
pub(crate) fn cartesian(axes: &[Vec<f64>]) -> impl Iterator<Item = Vec<f64>> + '_ {
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total).map(move |mut k| {
        let mut p = vec![0.0; axes.len()];
        for (j, axis) in axes.iter().enumerate().rev() {
            p[j] = axis[k % axis.len()];
            k /= axis.len();
        }
        p
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::expr::parse_polynomial;

    fn parse_all(ctx: &Context, items: &[&str]) -> Vec<Polynomial> {
        items.iter().map(|s| parse_polynomial(s, ctx).unwrap()).collect()
    }

    pub fn michaelis_menten() -> PeakProblem {
        let tx = VariableContext::with_time("t", &["x1", "x2"]).unwrap();
        let x = VariableContext::new(["x1", "x2"]).unwrap();
        let dynamics = RationalDynamics::new(
            &tx,
            parse_all(&tx, &["-0.75*x1", "-0.5625*x2"]),
            vec![
                RationalTerm { numerator: parse_all(&tx, &["1", "0"]), denominator: parse_polynomial("1 + 4.5*x2", &tx).unwrap() },
                RationalTerm { numerator: parse_all(&tx, &["0", "1.25"]), denominator: parse_polynomial("1 + 6.75*x1", &tx).unwrap() },
            ],
        )
        .unwrap();
        PeakProblem::new(
            dynamics,
            SemialgebraicSet::boxed(&x, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            SemialgebraicSet::disc(&x, &[0.3, 0.3], 0.3).unwrap(),
            6.0,
            Polynomial::var(&x, 1).unwrap(),
        )
        .unwrap()
    }

    pub fn twist() -> PeakProblem {
        let names = ["x1", "x2", "x3"];
        let tx = VariableContext::with_time("t", &names).unwrap();
        let x = VariableContext::new(names).unwrap();
        let zero = || Polynomial::zero(&tx);
        let p = |s: &str| parse_polynomial(s, &tx).unwrap();
        let dynamics = RationalDynamics::new(
            &tx,
            parse_all(&tx, &["-1.5*x1 - 1.5*x3", "1.5*x2 + 1.5*x3", "1.5*x1 + 1.5*x2"]),
            vec![
                RationalTerm { numerator: vec![p("-x1 + x2 + x3 + 2*x1^3 + 2*x3^3"), zero(), zero()], denominator: p("0.5 + x1^2") },
                RationalTerm { numerator: vec![zero(), p("-x1 - x3 - 2*x2^3 - 2*x3^3"), zero()], denominator: p("0.5 + x2^2") },
                RationalTerm { numerator: vec![zero(), zero(), p("x2 - 2*x3 - 2*x1^3 - 2*x2^3")], denominator: p("0.5 + x3^2") },
            ],
        )
        .unwrap();
        let b = SemialgebraicSet::boxed(&x, &[-1.0; 3], &[1.0; 3]).unwrap();
        let x0 = SemialgebraicSet::new(
            &x,
            parse_all(&x, &["(x1 + 1)*(1 - x1)", "(x2 + 1)*(1 - x2)"]),
            parse_all(&x, &["x3"]),
            Some((vec![-1.0, -1.0, 0.0], vec![1.0, 1.0, 0.0])),
        )
        .unwrap();
        PeakProblem::new(dynamics, b, x0, 6.0, parse_polynomial("x3^2", &x).unwrap()).unwrap()
    }

    /// `f0 = 0`, no rational terms, MM sets, `p = x2`.
    pub fn stationary() -> PeakProblem {
        let tx = VariableContext::with_time("t", &["x1", "x2"]).unwrap();
        let x = VariableContext::new(["x1", "x2"]).unwrap();
        let dynamics = RationalDynamics::new(&tx, vec![Polynomial::zero(&tx), Polynomial::zero(&tx)], vec![]).unwrap();
        PeakProblem::new(
            dynamics,
            SemialgebraicSet::boxed(&x, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            SemialgebraicSet::disc(&x, &[0.3, 0.3], 0.3).unwrap(),
            6.0,
            Polynomial::var(&x, 1).unwrap(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::expr::parse_polynomial;

    #[test]
    fn lie_derivative_examples() {
        let mm = michaelis_menten();
        let tx = mm.time_state_context().clone();
        let x2 = Polynomial::var(&tx, 2).unwrap();
        let lie = mm.dynamics.lie_f0(&x2).unwrap();
        assert_eq!(lie, parse_polynomial("-0.5625*x2", &tx).unwrap());
        let t = Polynomial::var(&tx, 0).unwrap();
        assert_eq!(mm.dynamics.lie_f0(&t).unwrap(), Polynomial::constant(&tx, 1.0));
        let st = stationary();
        let sq = parse_polynomial("x1^2", st.time_state_context()).unwrap();
        assert!(st.dynamics.lie_f0(&sq).unwrap().is_zero());
    }

    #[test]
    fn numerator_gradients() {
        let mm = michaelis_menten();
        let tx = mm.time_state_context().clone();
        let x2 = Polynomial::var(&tx, 2).unwrap();
        assert!(mm.dynamics.numerator_dot_grad(0, &x2).unwrap().is_zero());
        assert_eq!(mm.dynamics.numerator_dot_grad(1, &x2).unwrap(), Polynomial::constant(&tx, 1.25));
        let c = Polynomial::constant(&tx, 3.0);
        assert!(mm.dynamics.numerator_dot_grad(1, &c).unwrap().is_zero());
        assert!(matches!(mm.dynamics.numerator_dot_grad(2, &c), Err(SystemError::TermIndex { .. })));
    }

    #[test]
    fn lie_derivative_in_lifted_context() {
        let mm = michaelis_menten();
        let lifted = mm.lifted_context().unwrap();
        assert_eq!(lifted.names(), &["t", "x1", "x2", "y1", "y2"]);
        let v = parse_polynomial("x1*x2 + y1", &lifted).unwrap();
        let lie = mm.dynamics.lie_f0(&v).unwrap();
        assert_eq!(lie, parse_polynomial("-1.3125*x1*x2", &lifted).unwrap());
    }

    #[test]
    fn degree_bookkeeping() {
        let mm = michaelis_menten();
        assert_eq!(mm.dynamics.epsilon_degree(0).unwrap(), 1);
        assert_eq!(mm.dynamics.lift_degree_y(), 0);
        let tw = twist();
        assert_eq!(tw.dynamics.epsilon_degree(0).unwrap(), 2);
        assert_eq!(tw.dynamics.lift_degree_y(), 3);
        let (phi, _) = tw.dynamics.clearing_polys().unwrap();
        assert_eq!(phi.degree(), 6);

        let tx = VariableContext::with_time("t", &["x"]).unwrap();
        let d = RationalDynamics::new(
            &tx,
            vec![parse_polynomial("x^3", &tx).unwrap()],
            vec![RationalTerm { numerator: vec![parse_polynomial("x", &tx).unwrap()], denominator: Polynomial::constant(&tx, 1.0) }],
        )
        .unwrap();
        assert_eq!(d.epsilon_degree(0).unwrap(), 0);
        let cubic = RationalDynamics::new(&tx, vec![parse_polynomial("x^3", &tx).unwrap()], vec![]).unwrap();
        assert_eq!(cubic.lift_degree_y(), 2);
        assert!(matches!(cubic.clearing_polys(), Err(SystemError::NoRationalTerms)));
    }

    #[test]
    fn clearing_products() {
        let mm = michaelis_menten();
        let tx = mm.time_state_context().clone();
        let (phi, parts) = mm.dynamics.clearing_polys().unwrap();
        assert_eq!(phi, parse_polynomial("(1 + 4.5*x2)*(1 + 6.75*x1)", &tx).unwrap());
        assert_eq!(parts[0], parse_polynomial("1 + 6.75*x1", &tx).unwrap());
        assert_eq!(parts[1], parse_polynomial("1 + 4.5*x2", &tx).unwrap());

        let single = RationalDynamics::new(
            &tx,
            mm.dynamics.f0().to_vec(),
            vec![mm.dynamics.terms()[0].clone()],
        )
        .unwrap();
        let (phi, parts) = single.clearing_polys().unwrap();
        assert_eq!(phi, mm.dynamics.terms()[0].denominator);
        assert_eq!(parts, vec![Polynomial::constant(&tx, 1.0)]);
    }

    #[test]
    fn rhs_evaluation() {
        let mm = michaelis_menten();
        let f = mm.dynamics.evaluate_rhs(0.0, &[0.3203, 0.7027]).unwrap();
        assert!(f.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-3);
        let tw = twist();
        assert_eq!(tw.dynamics.evaluate_rhs(1.0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let st = stationary();
        assert_eq!(st.dynamics.evaluate_rhs(0.0, &[0.4, 0.1]).unwrap(), vec![0.0, 0.0]);
        let err = mm.dynamics.evaluate_rhs(0.0, &[0.1, -1.0 / 4.5]).unwrap_err();
        assert!(matches!(err, SystemError::Singularity { term: 0, .. }));
    }

    #[test]
    fn denominator_ranges() {
        let mm = michaelis_menten();
        let (lo, hi) = mm.denominator_range(0, 11).unwrap();
        assert_eq!((lo, hi), (1.0, 5.5));
        let tw = twist();
        let (lo, hi) = tw.denominator_range(0, 11).unwrap();
        assert_eq!((lo, hi), (0.5, 1.5));
    }

    #[test]
    fn time_rescaling_preserves_trajectories() {
        let mm = michaelis_menten();
        let r = mm.rescale_time().unwrap();
        assert_eq!(r.horizon, 1.0);
        let f = mm.dynamics.evaluate_rhs(3.0, &[0.2, 0.4]).unwrap();
        let g = r.dynamics.evaluate_rhs(0.5, &[0.2, 0.4]).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((6.0 * a - b).abs() < 1e-12);
        }
        let tx = mm.time_state_context();
        let p = parse_polynomial("1 + t^2*x1", tx).unwrap();
        assert_eq!(scale_variable(&p, 0, 2.0).unwrap(), parse_polynomial("1 + 4*t^2*x1", tx).unwrap());
    }

    #[test]
    fn problem_validation() {
        let mm = michaelis_menten();
        let bad = PeakProblem::new(mm.dynamics.clone(), mm.state_space.clone(), mm.initial_set.clone(), 0.0, mm.objective.clone());
        assert!(matches!(bad, Err(SystemError::BadHorizon(_))));
        let tx_obj = Polynomial::var(mm.time_state_context(), 1).unwrap();
        let bad = PeakProblem::new(mm.dynamics.clone(), mm.state_space.clone(), mm.initial_set.clone(), 6.0, tx_obj);
        assert!(bad.is_err());
    }
}
