//! JSON problem files.
//!
//! ```json
//! {
//!   "name": "michaelis-menten",
//!   "variables": ["x1", "x2"],
//!   "horizon": 6,
//!   "state_space": { "box": { "lo": [0, 0], "hi": [1, 1] } },
//!   "initial_set": { "disc": { "center": [0.3, 0.3], "radius": 0.3 } },
//!   "objective": "x2",
//!   "dynamics": {
//!     "f0": ["-0.75*x1", "-0.5625*x2"],
//!     "terms": [{ "numerator": ["1", "0"], "denominator": "1 + 4.5*x2" }]
//!   },
//!   "options": { "rescale_time": true }
//! }
//! ```
//!
//! Sets may also be given as `{"constraints": {"inequalities": [..],
//! "equalities": [..], "bounds": {"lo": [..], "hi": [..]}}}`. Dynamics
//! expressions may use the time variable (default `t`); set and objective
//! expressions may not.

use crate::expr::{parse_polynomial, ParseError};
use crate::formulations::BuildOptions;
use crate::poly::{Context, PolyError, Polynomial, VariableContext};
use crate::semialg::{Ball, SemialgebraicSet, SetError};
use crate::system::{PeakProblem, RationalDynamics, RationalTerm, SystemError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Expression { field: String, source: ParseError },
    #[error("{field}: expected {expected} entries, got {got}")]
    Dimension { field: String, expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub variables: Vec<String>,
    #[serde(default = "default_time")]
    pub time_variable: String,
    pub horizon: f64,
    pub state_space: SetSpec,
    pub initial_set: SetSpec,
    pub objective: String,
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub options: ProblemOptions,
}

fn default_time() -> String {
    "t".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disc { center: Vec<f64>, radius: f64 },
    Constraints {
        #[serde(default)]
        inequalities: Vec<String>,
        #[serde(default)]
        equalities: Vec<String>,
        #[serde(default)]
        bounds: Option<BoxSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub f0: Vec<String>,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub numerator: Vec<String>,
    pub denominator: String,
}

/// How a redundant ball constraint is chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallSpec {
    /// Circumball of the set's bounding box.
    #[default]
    Auto,
    None,
    Radius(f64),
    Ball(Ball),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemOptions {
    pub state_ball: BallSpec,
    pub initial_ball: BallSpec,
    /// Grid nodes per axis for the denominator positivity scan.
    pub positivity_resolution: usize,
    /// Half-degree of the denominator positivity certificate.
    pub positivity_half_degree: u32,
    pub rescale_time: bool,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            state_ball: BallSpec::Auto,
            initial_ball: BallSpec::Auto,
            positivity_resolution: 21,
            positivity_half_degree: 1,
            rescale_time: false,
        }
    }
}

/// A parsed problem with its solver options.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub name: String,
    pub problem: PeakProblem,
    pub options: ProblemOptions,
}

impl LoadedProblem {
    /// The problem handed to the SOS builders: time-rescaled if requested.
    pub fn sos_problem(&self) -> Result<PeakProblem, SystemError> {
        if self.options.rescale_time {
            self.problem.rescale_time()
        } else {
            Ok(self.problem.clone())
        }
    }

    pub fn build_options(&self, allow_unverified_positivity: bool) -> BuildOptions {
        let resolve = |spec: &BallSpec, set: &SemialgebraicSet| match spec {
            BallSpec::Auto => set.circumball(),
            BallSpec::None => None,
            BallSpec::Radius(r) => set.circumball().map(|b| Ball { center: b.center, radius: *r }),
            BallSpec::Ball(b) => Some(b.clone()),
        };
        BuildOptions {
            state_ball: resolve(&self.options.state_ball, &self.problem.state_space),
            initial_ball: resolve(&self.options.initial_ball, &self.problem.initial_set),
            allow_unverified_positivity,
        }
    }
}

pub fn load(path: &Path) -> Result<LoadedProblem, ProblemError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ProblemError::Io { path: path.display().to_string(), source })?;
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut loaded = parse(&text)?;
    if loaded.name.is_empty() {
        loaded.name = fallback;
    }
    Ok(loaded)
}

pub fn parse(text: &str) -> Result<LoadedProblem, ProblemError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.into_problem()
}

fn poly(text: &str, ctx: &Context, field: impl FnOnce() -> String) -> Result<Polynomial, ProblemError> {
    parse_polynomial(text, ctx).map_err(|source| ProblemError::Expression { field: field(), source })
}

fn polys(items: &[String], ctx: &Context, field: &str) -> Result<Vec<Polynomial>, ProblemError> {
    items.iter().enumerate().map(|(i, s)| poly(s, ctx, || format!("{field}[{i}]"))).collect()
}

fn expect_len(field: &str, expected: usize, got: usize) -> Result<(), ProblemError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProblemError::Dimension { field: field.into(), expected, got })
    }
}

impl SetSpec {
    fn build(&self, ctx: &Context, field: &str) -> Result<SemialgebraicSet, ProblemError> {
        let n = ctx.len();
        Ok(match self {
            SetSpec::Box { lo, hi } => {
                expect_len(&format!("{field}.box.lo"), n, lo.len())?;
                expect_len(&format!("{field}.box.hi"), n, hi.len())?;
                SemialgebraicSet::boxed(ctx, lo, hi)?
            }
            SetSpec::Disc { center, radius } => {
                expect_len(&format!("{field}.disc.center"), n, center.len())?;
                SemialgebraicSet::disc(ctx, center, *radius)?
            }
            SetSpec::Constraints { inequalities, equalities, bounds } => {
                let g = polys(inequalities, ctx, &format!("{field}.constraints.inequalities"))?;
                let h = polys(equalities, ctx, &format!("{field}.constraints.equalities"))?;
                let bounds = match bounds {
                    Some(b) => {
                        expect_len(&format!("{field}.constraints.bounds.lo"), n, b.lo.len())?;
                        expect_len(&format!("{field}.constraints.bounds.hi"), n, b.hi.len())?;
                        Some((b.lo.clone(), b.hi.clone()))
                    }
                    None => None,
                };
                SemialgebraicSet::new(ctx, g, h, bounds)?
            }
        })
    }
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<LoadedProblem, ProblemError> {
        if self.variables.is_empty() {
            return Err(ProblemError::Invalid("`variables` must name at least one state".into()));
        }
        if self.variables.contains(&self.time_variable) {
            return Err(ProblemError::Invalid(format!(
                "time variable `{}` is also listed as a state",
                self.time_variable
            )));
        }
        let states: Vec<&str> = self.variables.iter().map(String::as_str).collect();
        let x = VariableContext::new(states.iter().copied())?;
        let tx = VariableContext::with_time(&self.time_variable, &states)?;
        let n = states.len();

        expect_len("dynamics.f0", n, self.dynamics.f0.len())?;
        let f0 = polys(&self.dynamics.f0, &tx, "dynamics.f0")?;
        let mut terms = Vec::with_capacity(self.dynamics.terms.len());
        for (l, term) in self.dynamics.terms.iter().enumerate() {
            let field = format!("dynamics.terms[{l}]");
            expect_len(&format!("{field}.numerator"), n, term.numerator.len())?;
            terms.push(RationalTerm {
                numerator: polys(&term.numerator, &tx, &format!("{field}.numerator"))?,
                denominator: poly(&term.denominator, &tx, || format!("{field}.denominator"))?,
            });
        }
        let dynamics = RationalDynamics::new(&tx, f0, terms)?;
        let state_space = self.state_space.build(&x, "state_space")?;
        let initial_set = self.initial_set.build(&x, "initial_set")?;
        let objective = poly(&self.objective, &x, || "objective".into())?;
        let problem = PeakProblem::new(dynamics, state_space, initial_set, self.horizon, objective)?;
        if self.options.positivity_resolution < 2 {
            return Err(ProblemError::Invalid("options.positivity_resolution must be at least 2".into()));
        }
        Ok(LoadedProblem { name: self.name.unwrap_or_default(), problem, options: self.options })
    }
}
