//! The three peak-estimation SOS programs (sum-of-rational, cleared,
//! lifted), denominator positivity checks, and post-solve analysis.

use crate::poly::{binomial, Context, Monomial, PolyError, PolyOps, Polynomial};
use crate::sdp::{self, SdpInstance, SdpSolution, SolveSettings, Status};
use crate::semialg::{Ball, SemialgebraicSet, SetError};
use crate::sos::{AffineExpr, AffinePoly, RecoveryMap, SosError, SosProgram};
use crate::system::{PeakProblem, SystemError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
    #[error("relaxation order must be at least 1")]
    ZeroOrder,
    #[error("denominator positivity is not certified for term(s) {0:?}; pass the override to build anyway")]
    UncertifiedPositivity(Vec<usize>),
    #[error(
        "denominator {term} has sampled minimum {min} <= 0; lifted variable bounds cannot be derived, \
         supply explicit bounds or fix the state space"
    )]
    NonPositiveDenominator { term: usize, min: f64 },
    #[error("positivity report covers {got} terms but the system has {expected}")]
    StaleReport { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "sor")]
    SumOfRational,
    Cleared,
    Lifted,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SumOfRational, Method::Cleared, Method::Lifted];

    pub fn key(self) -> &'static str {
        match self {
            Method::SumOfRational => "sor",
            Method::Cleared => "cleared",
            Method::Lifted => "lifted",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::SumOfRational => "Sum-of-Rational",
            Method::Cleared => "Cleared",
            Method::Lifted => "Lifted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sor" | "sum-of-rational" => Ok(Method::SumOfRational),
            "cleared" => Ok(Method::Cleared),
            "lifted" => Ok(Method::Lifted),
            other => Err(format!("unknown method `{other}` (expected sor, cleared or lifted)")),
        }
    }
}

/// Outcome of the positivity check for one denominator over `[0, T] x X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCheck {
    pub term: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    /// Largest `delta` with `D - delta` certified WSOS, if the SDP solved.
    pub certified_margin: Option<f64>,
    pub certificate_degree: u32,
}

impl PositivityCheck {
    pub fn passed(&self) -> bool {
        self.grid_min > 0.0 && self.certified_margin.is_some_and(|d| d > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub resolution: usize,
    pub checks: Vec<PositivityCheck>,
}

impl PositivityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(PositivityCheck::passed)
    }

    pub fn failed_terms(&self) -> Vec<usize> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.term).collect()
    }
}

/// Two-stage positivity check of `D_l` on `[0, T] x X`: the grid minimum
/// and the largest `delta` such that `D_l - delta` is WSOS at truncation
/// `2 * half_degree` (raised to cover `deg D_l` if needed).
pub fn certify_denominator_positivity(
    problem: &PeakProblem,
    l: usize,
    resolution: usize,
    half_degree: u32,
    state_ball: Option<&Ball>,
) -> Result<PositivityCheck, FormulationError> {
    let (grid_min, grid_max) = problem.denominator_range(l, resolution)?;
    let d = &problem.dynamics.terms()[l].denominator;
    let half = half_degree.max(d.degree().div_ceil(2));
    let set = time_state_set(problem, state_ball)?;
    let mut prog = SosProgram::new();
    let delta = prog.new_scalar();
    let expr = AffinePoly::from_poly(d).sub(&AffinePoly::from_affine(set.context(), delta.expr()))?;
    prog.assert_wsos("positivity margin", expr, &set, 2 * half)?;
    prog.minimize(AffineExpr::scalar(delta.0, -1.0));
    let (inst, map) = prog.compile()?;
    let sol = sdp::solve(&inst, &SolveSettings::default())?;
    let certified_margin = (sol.status == Status::Optimal).then(|| map.scalar_values(&sol.x)[delta.0]);
    Ok(PositivityCheck { term: l, grid_min, grid_max, certified_margin, certificate_degree: 2 * half })
}

pub fn check_positivity(
    problem: &PeakProblem,
    resolution: usize,
    half_degree: u32,
    state_ball: Option<&Ball>,
) -> Result<PositivityReport, FormulationError> {
    let checks = (0..problem.dynamics.num_terms())
        .map(|l| certify_denominator_positivity(problem, l, resolution, half_degree, state_ball))
        .collect::<Result<_, _>>()?;
    Ok(PositivityReport { resolution, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Redundant ball appended to `X`.
    pub state_ball: Option<Ball>,
    /// Redundant ball appended to `X0`.
    pub initial_ball: Option<Ball>,
    pub allow_unverified_positivity: bool,
}

impl BuildOptions {
    /// Circumballs of both sets' bounding boxes (when they have one).
    pub fn circumballs(problem: &PeakProblem) -> Self {
        BuildOptions {
            state_ball: problem.state_space.circumball(),
            initial_ball: problem.initial_set.circumball(),
            allow_unverified_positivity: false,
        }
    }
}

/// One WSOS assertion as compiled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    pub variables: usize,
    pub truncation: u32,
    pub expression_degree: u32,
    pub gram_sides: Vec<usize>,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltProgram {
    pub method: Method,
    pub order: u32,
    pub horizon: f64,
    pub instance: SdpInstance,
    pub program: SosProgram,
    pub recovery: RecoveryMap,
    pub ledger: Vec<LedgerEntry>,
    /// Largest Gram side predicted by [`expected_largest_side`].
    pub expected_largest_side: usize,
    pub unverified_positivity: bool,
    gamma: usize,
    lie: usize,
    rational: Vec<usize>,
    lie_weight: Polynomial,
    lifted_vars: Vec<Monomial>,
    inf_denominators: Vec<f64>,
}

impl BuiltProgram {
    pub fn largest_side(&self) -> usize {
        self.instance.layout.largest_psd()
    }

    pub fn row_count(&self) -> usize {
        self.instance.rows.len()
    }
}

fn shift(d: u32) -> u32 {
    // floor((d - 1) / 2) clamped at zero
    d.saturating_sub(1) / 2
}

/// Half-degree of the dominant Gram block predicted from the system's
/// degrees, and the number of variables it lives in.
pub fn dominant_block(problem: &PeakProblem, method: Method, k: u32) -> Result<(usize, u32), FormulationError> {
    let dynamics = &problem.dynamics;
    let n = problem.dim();
    let f0 = shift(dynamics.f0_degree());
    Ok(match method {
        Method::SumOfRational => {
            let mut half = k + f0;
            for l in 0..dynamics.num_terms() {
                half = half.max(k + dynamics.epsilon_degree(l)?.div_ceil(2));
            }
            (n + 1, half)
        }
        Method::Cleared => {
            let phi: u32 = dynamics.terms().iter().map(|t| t.denominator.degree()).sum();
            (n + 1, k + shift(phi).max(f0))
        }
        Method::Lifted => (n + 1 + dynamics.num_terms(), k + dynamics.lift_degree_y() / 2),
    })
}

pub fn expected_largest_side(problem: &PeakProblem, method: Method, k: u32) -> Result<usize, FormulationError> {
    let (vars, half) = dominant_block(problem, method, k)?;
    Ok(binomial(vars + half as usize, vars))
}

fn time_state_set(problem: &PeakProblem, ball: Option<&Ball>) -> Result<SemialgebraicSet, FormulationError> {
    let x = match ball {
        Some(b) => problem.state_space.with_ball(b)?,
        None => problem.state_space.clone(),
    };
    Ok(x.times_interval(problem.time_state_context(), problem.horizon)?)
}

/// Builds the degree-`k` program for `method`.
pub fn build(
    problem: &PeakProblem,
    method: Method,
    k: u32,
    options: &BuildOptions,
    positivity: &PositivityReport,
) -> Result<BuiltProgram, FormulationError> {
    if k == 0 {
        return Err(FormulationError::ZeroOrder);
    }
    let terms = problem.dynamics.num_terms();
    if positivity.checks.len() != terms {
        return Err(FormulationError::StaleReport { expected: terms, got: positivity.checks.len() });
    }
    let unverified = !positivity.passed();
    if unverified && !options.allow_unverified_positivity {
        return Err(FormulationError::UncertifiedPositivity(positivity.failed_terms()));
    }

    let dynamics = &problem.dynamics;
    let tx = problem.time_state_context().clone();
    let tx_set = time_state_set(problem, options.state_ball.as_ref())?;
    let x0_set = match &options.initial_ball {
        Some(b) => problem.initial_set.with_ball(b)?,
        None => problem.initial_set.clone(),
    };

    let mut prog = SosProgram::new();
    let gamma = prog.new_scalar();
    let v = prog.new_poly_var(&tx, 2 * k);
    let va = v.affine();

    let v0 = va.substitute(0, 0.0)?.embed_into(problem.state_context())?;
    let init = AffinePoly::from_affine(problem.state_context(), gamma.expr()).sub(&v0)?;
    prog.assert_wsos("initial", init, &x0_set, 2 * k)?;

    let p = AffinePoly::from_poly(&problem.objective.embed_into(&tx)?);
    prog.assert_wsos("objective", va.sub(&p)?, &tx_set, 2 * k)?;

    let f0_shift = shift(dynamics.f0_degree());
    let mut rational = Vec::new();
    let mut lifted_vars = Vec::new();
    let inf_denominators: Vec<f64> = positivity.checks.iter().map(|c| c.grid_min).collect();
    let (lie, lie_weight) = match method {
        Method::SumOfRational => {
            let mut lie = dynamics.lie_f0(&va)?.scale(-1.0);
            let mut qs = Vec::with_capacity(terms);
            for _ in 0..terms {
                let q = prog.new_poly_var(&tx, 2 * k);
                lie = lie.sub(&q.affine())?;
                qs.push(q);
            }
            let idx = prog.assert_wsos("lie", lie, &tx_set, 2 * (k + f0_shift))?;
            for (l, q) in qs.iter().enumerate() {
                let d = &dynamics.terms()[l].denominator;
                let expr = q.affine().mul_poly(d)?.sub(&dynamics.numerator_dot_grad(l, &va)?)?;
                let e = dynamics.epsilon_degree(l)?;
                // Rounding eps up covers the odd top degree of D q - N . grad v.
                let trunc = 2 * (k + e.div_ceil(2));
                rational.push(prog.assert_wsos(&format!("rational {}", l + 1), expr, &tx_set, trunc)?);
            }
            (idx, Polynomial::constant(&tx, 1.0))
        }
        Method::Cleared => {
            let (phi, phis) = if terms == 0 {
                (Polynomial::constant(&tx, 1.0), Vec::new())
            } else {
                dynamics.clearing_polys()?
            };
            let mut lie = dynamics.lie_f0(&va)?.mul_poly(&phi)?.scale(-1.0);
            for (l, phi_l) in phis.iter().enumerate() {
                lie = lie.sub(&dynamics.numerator_dot_grad(l, &va)?.mul_poly(phi_l)?)?;
            }
            let trunc = 2 * (k + shift(phi.degree()).max(f0_shift));
            (prog.assert_wsos("lie", lie, &tx_set, trunc)?, phi)
        }
        Method::Lifted => {
            let ctx = if terms == 0 { tx.clone() } else { problem.lifted_context()? };
            let base = tx_set.embed_into(&ctx)?;
            let nt = tx.len();
            let mut ineqs = Vec::with_capacity(terms);
            let mut eqs = Vec::with_capacity(terms);
            for (l, check) in positivity.checks.iter().enumerate() {
                if !(check.grid_min > 0.0) {
                    return Err(FormulationError::NonPositiveDenominator { term: l, min: check.grid_min });
                }
                let lo = 1.0 / (1.1 * check.grid_max);
                let hi = 1.1 / check.grid_min;
                let y = Polynomial::var(&ctx, nt + l)?;
                let c = |v: f64| Polynomial::constant(&ctx, v);
                ineqs.push(y.sub(&c(lo))?.mul(&c(hi).sub(&y)?)?);
                let d = dynamics.terms()[l].denominator.embed_into(&ctx)?;
                eqs.push(y.mul(&d)?.sub(&c(1.0))?);
                lifted_vars.push(Monomial::var(ctx.len(), nt + l));
            }
            let omega = base.with_constraints(ineqs, eqs)?;
            let vl = va.embed_into(&ctx)?;
            let mut lie = dynamics.lie_f0(&vl)?.scale(-1.0);
            for l in 0..terms {
                let y = Polynomial::var(&ctx, nt + l)?;
                lie = lie.sub(&dynamics.numerator_dot_grad(l, &vl)?.mul_poly(&y)?)?;
            }
            let trunc = 2 * (k + dynamics.lift_degree_y() / 2);
            (prog.assert_wsos("lie", lie, &omega, trunc)?, Polynomial::constant(&ctx, 1.0))
        }
    };
    prog.minimize(gamma.expr());

    let (instance, recovery) = prog.compile()?;
    let ledger = recovery
        .assertions
        .iter()
        .enumerate()
        .map(|(i, a)| LedgerEntry {
            name: a.name.clone(),
            variables: prog.assertion_set(i).dim(),
            truncation: a.truncation,
            expression_degree: a.row_monomials.iter().map(Monomial::degree).max().unwrap_or(0),
            gram_sides: a.grams.iter().map(|g| g.basis.len()).collect(),
            rows: a.rows.len(),
        })
        .collect();
    Ok(BuiltProgram {
        method,
        order: k,
        horizon: problem.horizon,
        instance,
        program: prog,
        recovery,
        ledger,
        expected_largest_side: expected_largest_side(problem, method, k)?,
        unverified_positivity: unverified,
        gamma: gamma.0,
        lie,
        rational,
        lie_weight,
        lifted_vars,
        inf_denominators,
    })
}

/// Masses of the measures behind the dual program, read off the equality
/// duals at constant (or weight) monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoMoments {
    pub initial: f64,
    pub terminal: f64,
    pub occupation: f64,
    pub rational: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub initial_ok: bool,
    pub terminal_ok: bool,
    pub occupation_ok: bool,
    pub rational_ok: Vec<bool>,
}

impl MomentCheck {
    pub fn all(&self) -> bool {
        self.initial_ok && self.terminal_ok && self.occupation_ok && self.rational_ok.iter().all(|b| *b)
    }
}

/// Trace penalties tried in turn by [`BuiltProgram::solve`].
///
/// SOS programs for peak bounds are often degenerate: the moment side has
/// no interior point, so Gram matrices grow without bound along the central
/// path and the Newton systems lose accuracy before the tolerances are met.
/// Adding `rho * trace` to the objective makes the dual strictly feasible and
/// the Gram iterates bounded. The reported bound is `gamma` of a feasible
/// certificate either way, so it stays a valid upper bound; it can exceed
/// the unpenalized optimum by at most `rho` times the certificate's trace.
pub const TRACE_PENALTIES: &[f64] = &[0.0, 1e-8, 1e-7, 1e-6];

/// Largest coefficient residual, and most negative Gram eigenvalue, for a
/// certificate to count as verified.
pub const CERTIFICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedProgram {
    pub status: Status,
    /// `gamma` of the returned certificate.
    pub bound: f64,
    /// Dual objective of the (possibly penalized) program actually solved.
    pub dual_bound: f64,
    /// Trace penalty of the attempt that produced this result.
    pub trace_penalty: f64,
    pub solve_time: Duration,
    pub iterations: usize,
    pub moments: Option<PseudoMoments>,
    /// Worst coefficient residual over all assertions.
    pub certificate_residual: Option<f64>,
    pub min_gram_eigenvalue: Option<f64>,
    pub solution: SdpSolution,
}

impl SolvedProgram {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Optimal with a certificate that passed [`BuiltProgram::verify`].
    pub fn is_verified(&self) -> bool {
        self.is_optimal()
            && self.certificate_residual.is_some_and(|r| r <= CERTIFICATE_TOL)
            && self.min_gram_eigenvalue.is_some_and(|e| e >= -CERTIFICATE_TOL)
    }
}

fn dual_at(y: &[f64], map: &RecoveryMap, assertion: usize, m: &Monomial) -> f64 {
    map.assertions[assertion].row_of(m).map_or(0.0, |r| y[r])
}

impl BuiltProgram {
    pub fn pseudo_moments(&self, y: &[f64]) -> PseudoMoments {
        let one = |a: usize| {
            let n = self.program.assertion_set(a).dim();
            dual_at(y, &self.recovery, a, &Monomial::one(n))
        };
        let occupation = self.lie_weight.terms().map(|(m, c)| c * dual_at(y, &self.recovery, self.lie, m)).sum();
        let rational = if !self.rational.is_empty() {
            self.rational.iter().map(|&a| one(a)).collect()
        } else {
            self.lifted_vars.iter().map(|m| dual_at(y, &self.recovery, self.lie, m)).collect()
        };
        PseudoMoments { initial: one(0), terminal: one(1), occupation, rational }
    }

    /// Checks masses against `m(mu0) = m(mu_p) = 1`, `m(mu) <= T` and
    /// `m(nu_l) <= T / inf D_l`. Cleared programs carry no `nu_l`.
    pub fn check_moments(&self, m: &PseudoMoments, unit_tol: f64, mass_tol: f64) -> MomentCheck {
        MomentCheck {
            initial_ok: (m.initial - 1.0).abs() <= unit_tol,
            terminal_ok: (m.terminal - 1.0).abs() <= unit_tol,
            occupation_ok: m.occupation <= self.horizon + mass_tol,
            rational_ok: m
                .rational
                .iter()
                .zip(&self.inf_denominators)
                .map(|(v, d)| *v <= self.horizon / d + mass_tol)
                .collect(),
        }
    }

    /// Solves the program, retrying with a small trace penalty on every Gram
    /// block when the plain solve does not reach optimality or its
    /// certificate fails verification (see [`TRACE_PENALTIES`]).
    pub fn solve(&self, settings: &SolveSettings) -> Result<SolvedProgram, FormulationError> {
        let start = Instant::now();
        let mut last = None;
        for &rho in TRACE_PENALTIES {
            let solution = sdp::solve(&self.with_trace_penalty(rho), settings)?;
            let verified = if solution.status == Status::Optimal { Some(self.verify(&solution.x)?) } else { None };
            let done = verified.is_some_and(|(res, eig)| res <= CERTIFICATE_TOL && eig >= -CERTIFICATE_TOL);
            last = Some((rho, solution, verified));
            if done {
                break;
            }
        }
        let (trace_penalty, solution, verified) = last.expect("at least one attempt");
        let offset = self.recovery.objective_offset;
        let gamma = self.recovery.scalar_values(&solution.x)[self.gamma];
        let moments = verified.map(|_| self.pseudo_moments(&solution.y));
        Ok(SolvedProgram {
            status: solution.status,
            bound: gamma,
            dual_bound: solution.dual_objective + offset,
            trace_penalty,
            solve_time: start.elapsed(),
            iterations: solution.iterations,
            moments,
            certificate_residual: verified.map(|v| v.0),
            min_gram_eigenvalue: verified.map(|v| v.1),
            solution,
        })
    }

    /// Worst coefficient residual and smallest Gram eigenvalue over all
    /// assertions at `x`.
    pub fn verify(&self, x: &[f64]) -> Result<(f64, f64), FormulationError> {
        let scalars = self.recovery.scalar_values(x);
        let mut worst = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for a in 0..self.program.assertion_count() {
            let cert = self.program.certificate(&self.recovery, &self.instance.layout, x, a);
            let rep = self.program.verify_certificate(&self.recovery, a, &cert, &scalars)?;
            worst = worst.max(rep.max_residual);
            min_eig = min_eig.min(rep.min_eigenvalue);
        }
        Ok((worst, min_eig))
    }

    fn with_trace_penalty(&self, rho: f64) -> SdpInstance {
        let mut inst = self.instance.clone();
        if rho > 0.0 {
            for (j, &side) in self.instance.layout.psd.iter().enumerate() {
                let off = inst.layout.psd_offset(j);
                for i in 0..side {
                    inst.c[off + sdp::svec_index(i, i)] += rho;
                }
            }
        }
        inst
    }

    pub fn context_of(&self, assertion: usize) -> &Context {
        self.program.assertion_set(assertion).context()
    }
}
