//! Per-cell solves, method/degree sweeps, and Markdown/CSV rendering.

use crate::formulations::{self, BuildOptions, FormulationError, Method, PositivityReport, PseudoMoments};
use crate::problem::LoadedProblem;
use crate::sampler::{self, SampleReport, SamplerError};
use crate::sdp::{sdpa, SolveSettings};
use crate::system::{PeakProblem, SystemError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Tolerance on the unit masses of the initial and terminal measures.
pub const UNIT_MASS_TOL: f64 = 1e-4;
/// Slack on the occupation and rational mass bounds.
pub const MASS_TOL: f64 = 1e-3;
/// Slack in the check that sampled values never exceed certified bounds.
pub const SANDWICH_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Everything shared by the cells of one problem.
#[derive(Debug, Clone)]
pub struct Session {
    pub name: String,
    /// Problem in original time, used by the sampler.
    pub problem: PeakProblem,
    /// Problem handed to the SOS builders (possibly time-rescaled).
    pub sos_problem: PeakProblem,
    pub build_options: BuildOptions,
    pub positivity: PositivityReport,
    pub rescaled_time: bool,
}

impl Session {
    /// Runs the denominator positivity check once for all cells.
    pub fn new(loaded: &LoadedProblem, allow_unverified_positivity: bool) -> Result<Self, ReportError> {
        let sos_problem = loaded.sos_problem()?;
        let build_options = loaded.build_options(allow_unverified_positivity);
        let positivity = formulations::check_positivity(
            &sos_problem,
            loaded.options.positivity_resolution,
            loaded.options.positivity_half_degree,
            build_options.state_ball.as_ref(),
        )?;
        Ok(Session {
            name: loaded.name.clone(),
            problem: loaded.problem.clone(),
            sos_problem,
            build_options,
            positivity,
            rescaled_time: loaded.options.rescale_time,
        })
    }

    /// Bounds are only guaranteed when every denominator passed the check.
    pub fn guaranteed(&self) -> bool {
        self.positivity.passed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub order: u32,
    /// `Optimal` only when the certificate verified; otherwise the solver
    /// status, `Unverified`, or `Error`.
    pub status: String,
    pub bound: Option<f64>,
    pub dual_bound: Option<f64>,
    pub solve_seconds: f64,
    pub iterations: usize,
    pub largest_side: Option<usize>,
    pub expected_side: Option<usize>,
    pub rows: Option<usize>,
    pub trace_penalty: Option<f64>,
    pub certificate_residual: Option<f64>,
    pub min_gram_eigenvalue: Option<f64>,
    pub moments: Option<PseudoMoments>,
    pub moments_ok: Option<bool>,
    /// `false` when the sampled lower bound exceeds this cell's bound.
    pub sandwich_ok: Option<bool>,
    pub guaranteed: bool,
    pub error: Option<String>,
}

impl CellReport {
    pub fn is_optimal(&self) -> bool {
        self.status == "Optimal"
    }

    fn failed(method: Method, order: u32, err: impl ToString) -> Self {
        CellReport {
            method,
            order,
            status: "Error".into(),
            bound: None,
            dual_bound: None,
            solve_seconds: 0.0,
            iterations: 0,
            largest_side: None,
            expected_side: None,
            rows: None,
            trace_penalty: None,
            certificate_residual: None,
            min_gram_eigenvalue: None,
            moments: None,
            moments_ok: None,
            sandwich_ok: None,
            guaranteed: false,
            error: Some(err.to_string()),
        }
    }
}

/// Builds and solves one `(method, k)` cell. Failures are recorded in the
/// report rather than returned.
pub fn run_cell(
    session: &Session,
    method: Method,
    order: u32,
    settings: &SolveSettings,
    sdpa_dump: Option<&Path>,
) -> CellReport {
    match try_cell(session, method, order, settings, sdpa_dump) {
        Ok(cell) => cell,
        Err(e) => CellReport::failed(method, order, e),
    }
}

fn try_cell(
    session: &Session,
    method: Method,
    order: u32,
    settings: &SolveSettings,
    sdpa_dump: Option<&Path>,
) -> Result<CellReport, Box<dyn std::error::Error>> {
    let built = formulations::build(&session.sos_problem, method, order, &session.build_options, &session.positivity)?;
    if let Some(path) = sdpa_dump {
        sdpa::write_sdpa(&built.instance, path)?;
    }
    let solved = built.solve(settings)?;
    let status = if solved.is_verified() {
        "Optimal".to_string()
    } else if solved.is_optimal() {
        "Unverified".to_string()
    } else {
        solved.status.to_string()
    };
    let moments_ok = solved
        .moments
        .as_ref()
        .map(|m| built.check_moments(m, UNIT_MASS_TOL, MASS_TOL).all());
    Ok(CellReport {
        method,
        order,
        bound: solved.is_verified().then_some(solved.bound),
        dual_bound: solved.is_optimal().then_some(solved.dual_bound),
        solve_seconds: solved.solve_time.as_secs_f64(),
        iterations: solved.iterations,
        largest_side: Some(built.largest_side()),
        expected_side: Some(built.expected_largest_side),
        rows: Some(built.row_count()),
        trace_penalty: Some(solved.trace_penalty),
        certificate_residual: solved.certificate_residual,
        min_gram_eigenvalue: solved.min_gram_eigenvalue,
        moments: solved.moments,
        moments_ok,
        sandwich_ok: None,
        guaranteed: !built.unverified_positivity,
        error: None,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub horizon: f64,
    pub rescaled_time: bool,
    pub positivity: PositivityReport,
    pub methods: Vec<Method>,
    pub orders: Vec<u32>,
    pub cells: Vec<CellReport>,
    pub sampler: Option<SampleReport>,
}

/// Sampling parameters for the lower-bound row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub resolution: usize,
    pub dt: f64,
}

/// `path` with `_{method}_k{order}` inserted before the extension.
pub fn cell_path(path: &Path, method: Method, order: u32) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{method}_k{order}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{method}_k{order}"),
    };
    path.with_file_name(name)
}

/// Solves every `(method, k)` cell (in parallel, reported in row-major
/// order) and, if requested, the sampler row.
pub fn run_table(
    session: &Session,
    methods: &[Method],
    orders: &[u32],
    sample: Option<SampleOptions>,
    settings: &SolveSettings,
    sdpa_dump: Option<&Path>,
) -> Result<BoundReport, ReportError> {
    let specs: Vec<(Method, u32)> = methods.iter().flat_map(|&m| orders.iter().map(move |&k| (m, k))).collect();
    let sampled = sample
        .map(|s| sampler::lower_bound(&session.problem, s.resolution, s.dt))
        .transpose()?;
    let mut cells: Vec<CellReport> = specs
        .par_iter()
        .map(|&(m, k)| {
            let dump = sdpa_dump.map(|p| cell_path(p, m, k));
            run_cell(session, m, k, settings, dump.as_deref())
        })
        .collect();
    if let Some(s) = &sampled {
        for cell in &mut cells {
            cell.sandwich_ok = cell.bound.map(|b| b >= s.value - SANDWICH_TOL);
        }
    }
    Ok(BoundReport {
        name: session.name.clone(),
        horizon: session.problem.horizon,
        rescaled_time: session.rescaled_time,
        positivity: session.positivity.clone(),
        methods: methods.to_vec(),
        orders: orders.to_vec(),
        cells,
        sampler: sampled,
    })
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.4}"))
}

fn sci(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.4e}"))
}

fn masses(m: &Option<PseudoMoments>) -> [String; 4] {
    match m {
        Some(m) => [
            format!("{:.4}", m.initial),
            format!("{:.4}", m.terminal),
            format!("{:.4}", m.occupation),
            m.rational.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(";"),
        ],
        None => Default::default(),
    }
}

impl BoundReport {
    pub fn cell(&self, method: Method, order: u32) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.order == order)
    }

    /// Cells whose certified bound lies below the sampled lower bound.
    pub fn sandwich_violations(&self) -> Vec<&CellReport> {
        self.cells.iter().filter(|c| c.sandwich_ok == Some(false)).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Peak bounds for `{}` (T = {})\n", self.name, self.horizon);
        let _ = write!(s, "| Method |");
        for k in &self.orders {
            let _ = write!(s, " k = {k} |");
        }
        let _ = write!(s, "\n|---|");
        for _ in &self.orders {
            let _ = write!(s, "---:|");
        }
        s.push('\n');
        for &m in &self.methods {
            let _ = write!(s, "| {} |", m.label());
            for &k in &self.orders {
                let text = match self.cell(m, k) {
                    Some(c) => match c.bound {
                        Some(b) if c.guaranteed => format!("{b:.4}"),
                        Some(b) => format!("{b:.4} (bound not guaranteed)"),
                        None => format!("- ({})", c.status),
                    },
                    None => String::new(),
                };
                let _ = write!(s, " {text} |");
            }
            s.push('\n');
        }
        if let Some(p) = &self.sampler {
            let _ = writeln!(
                s,
                "\nSampled lower bound: **{:.4}** ({} trajectories, resolution {}, dt {}; attained at t = {:.4}, x0 = {:?}).",
                p.value, p.trajectories, p.resolution, p.dt, p.time, p.initial
            );
        }
        let violations = self.sandwich_violations();
        if !violations.is_empty() {
            let _ = writeln!(s, "\n**Warning:** {} cell(s) certify a bound below the sampled value.", violations.len());
        }
        if !self.positivity.passed() {
            let _ = writeln!(
                s,
                "\n**Warning:** denominator positivity not certified for term(s) {:?}; bounds are not guaranteed.",
                self.positivity.failed_terms()
            );
        }
        let _ = writeln!(
            s,
            "\n| Method | k | Status | Bound | Largest block | Predicted | Rows | Time (s) | m(mu0) | m(mu_p) | m(mu) | m(nu) | Residual |"
        );
        let _ = writeln!(s, "|---|---:|---|---:|---:|---:|---:|---:|---:|---:|---:|---|---:|");
        for c in &self.cells {
            let [m0, mp, mu, nu] = masses(&c.moments);
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {:.2} | {m0} | {mp} | {mu} | {nu} | {} |",
                c.method.label(),
                c.order,
                c.error.as_deref().map_or(c.status.clone(), |e| format!("{}: {e}", c.status)),
                fixed(c.bound),
                c.largest_side.map_or_else(String::new, |v| v.to_string()),
                c.expected_side.map_or_else(String::new, |v| v.to_string()),
                c.rows.map_or_else(String::new, |v| v.to_string()),
                c.solve_seconds,
                sci(c.certificate_residual),
            );
        }
        s
    }

    /// Machine-readable table. Timings are left out so identical inputs
    /// give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "problem",
            "method",
            "order",
            "status",
            "bound",
            "dual_bound",
            "largest_side",
            "expected_side",
            "rows",
            "trace_penalty",
            "initial_mass",
            "terminal_mass",
            "occupation_mass",
            "rational_masses",
            "certificate_residual",
            "guaranteed",
            "sandwich_ok",
        ];
        w.write_record(header).expect("in-memory write");
        let opt = |v: Option<usize>| v.map_or_else(String::new, |v| v.to_string());
        let flag = |v: Option<bool>| v.map_or_else(String::new, |v| v.to_string());
        for c in &self.cells {
            let [m0, mp, mu, nu] = masses(&c.moments);
            let row = [
                self.name.clone(),
                c.method.key().to_string(),
                c.order.to_string(),
                c.status.clone(),
                fixed(c.bound),
                fixed(c.dual_bound),
                opt(c.largest_side),
                opt(c.expected_side),
                opt(c.rows),
                c.trace_penalty.map_or_else(String::new, |v| format!("{v:e}")),
                m0,
                mp,
                mu,
                nu,
                sci(c.certificate_residual),
                c.guaranteed.to_string(),
                flag(c.sandwich_ok),
            ];
            w.write_record(&row).expect("in-memory write");
        }
        if let Some(p) = &self.sampler {
            let mut row = vec![String::new(); header.len()];
            row[0] = self.name.clone();
            row[1] = "sampler".into();
            row[3] = format!("resolution={};dt={}", p.resolution, p.dt);
            row[4] = format!("{:.4}", p.value);
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}
