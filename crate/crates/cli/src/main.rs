use clap::{Args, Parser, Subcommand};
use ratpeak::formulations::Method;
use ratpeak::problem::{self, LoadedProblem};
use ratpeak::report::{self, SampleOptions, Session};
use ratpeak::sampler;
use ratpeak::sdp::SolveSettings;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Certified upper bounds on the peak of a state function along
/// trajectories of rational ODE systems.
#[derive(Debug, Parser)]
#[command(name = "ratpeak", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one (method, degree) cell and print the bound.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sor")]
        method: Method,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        degree: u32,
        /// Write the compiled SDP in SDPA sparse format.
        #[arg(long, value_name = "FILE")]
        sdpa_dump: Option<PathBuf>,
    },
    /// Sweep methods and degrees, with a sampled lower bound, as a table.
    Table {
        #[command(flatten)]
        common: Common,
        /// Methods to run (repeatable); all three by default.
        #[arg(long)]
        method: Vec<Method>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        degree: u32,
        /// Highest degree of the sweep (defaults to --degree).
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        degree_max: Option<u32>,
        #[command(flatten)]
        sampling: Sampling,
        /// Skip the sampler row.
        #[arg(long)]
        no_sample: bool,
        /// Write the table as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Write each cell's SDP in SDPA format (`_<method>_k<degree>` is
        /// appended to the file stem).
        #[arg(long, value_name = "FILE")]
        sdpa_dump: Option<PathBuf>,
    },
    /// Sample trajectories from a grid over the initial set.
    Sample {
        /// Problem file (JSON).
        config: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
        /// Write every trajectory as CSV (trajectory, t, states, p).
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Problem file (JSON).
    config: PathBuf,
    /// Build even if denominator positivity is not certified; bounds are
    /// then marked as not guaranteed.
    #[arg(long)]
    allow_unverified_a5: bool,
    /// Rescale time to [0, 1] before building (overrides the file).
    #[arg(long, conflicts_with = "no_rescale_time")]
    rescale_time: bool,
    /// Keep the original time axis (overrides the file).
    #[arg(long)]
    no_rescale_time: bool,
    /// Print interior-point iterations.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct Sampling {
    /// Grid nodes per free axis of the initial set's bounding box.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    sample_resolution: u64,
    /// RK4 step size.
    #[arg(long, default_value_t = 1e-2, value_parser = positive)]
    dt: f64,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

enum Failure {
    Input(String),
    Solve(String),
}

impl Common {
    fn load(&self) -> Result<LoadedProblem, Failure> {
        let mut loaded = load(&self.config)?;
        if self.rescale_time {
            loaded.options.rescale_time = true;
        }
        if self.no_rescale_time {
            loaded.options.rescale_time = false;
        }
        Ok(loaded)
    }

    fn settings(&self) -> SolveSettings {
        SolveSettings { verbose: self.verbose, ..Default::default() }
    }

    fn session(&self) -> Result<Session, Failure> {
        let loaded = self.load()?;
        eprintln!(
            "note: trajectory uniqueness and compactness of the sets are assumed, not checked; \
             state constraints are enforced for all time up to T."
        );
        let session = Session::new(&loaded, self.allow_unverified_a5).map_err(|e| Failure::Solve(e.to_string()))?;
        for c in &session.positivity.checks {
            eprintln!(
                "denominator {}: grid range [{:.4}, {:.4}], certified margin {}",
                c.term + 1,
                c.grid_min,
                c.grid_max,
                c.certified_margin.map_or("none".to_string(), |m| format!("{m:.4}"))
            );
        }
        if !session.guaranteed() && !self.allow_unverified_a5 {
            return Err(Failure::Solve(format!(
                "denominator positivity is not certified for term(s) {:?}; rerun with --allow-unverified-a5 \
                 to compute a bound that is not guaranteed",
                session.positivity.failed_terms().iter().map(|t| t + 1).collect::<Vec<_>>()
            )));
        }
        Ok(session)
    }
}

fn load(path: &Path) -> Result<LoadedProblem, Failure> {
    problem::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { common, method, degree, sdpa_dump } => {
            let session = common.session()?;
            let cell = report::run_cell(&session, method, degree, &common.settings(), sdpa_dump.as_deref());
            if let Some(err) = &cell.error {
                return Err(Failure::Solve(err.clone()));
            }
            println!("problem: {}", session.name);
            println!("method: {} (k = {degree})", method.label());
            println!("status: {}", cell.status);
            if let (Some(side), Some(expected), Some(rows)) = (cell.largest_side, cell.expected_side, cell.rows) {
                println!("largest block: {side} (predicted {expected}), rows: {rows}");
            }
            println!("solve time: {:.2} s, iterations: {}", cell.solve_seconds, cell.iterations);
            if let Some(m) = &cell.moments {
                let nu: Vec<String> = m.rational.iter().map(|v| format!("{v:.4}")).collect();
                println!(
                    "masses: mu0 {:.4}, mu_p {:.4}, mu {:.4}, nu [{}]{}",
                    m.initial,
                    m.terminal,
                    m.occupation,
                    nu.join(", "),
                    if cell.moments_ok == Some(false) { " (outside expected ranges)" } else { "" }
                );
            }
            if let Some(r) = cell.certificate_residual {
                println!("certificate residual: {r:.4e}");
            }
            match cell.bound {
                Some(b) => {
                    let note = if cell.guaranteed { "" } else { " (bound not guaranteed)" };
                    println!("bound: {b:.4}{note}");
                    Ok(())
                }
                None => Err(Failure::Solve(format!("no certified bound: solver status {}", cell.status))),
            }
        }
        Command::Table { common, method, degree, degree_max, sampling, no_sample, csv, sdpa_dump } => {
            let session = common.session()?;
            let methods = if method.is_empty() { Method::ALL.to_vec() } else { method };
            let top = degree_max.unwrap_or(degree);
            if top < degree {
                return Err(Failure::Input(format!("--degree-max {top} is below --degree {degree}")));
            }
            let orders: Vec<u32> = (degree..=top).collect();
            let sample = (!no_sample)
                .then_some(SampleOptions { resolution: sampling.sample_resolution as usize, dt: sampling.dt });
            let table = report::run_table(&session, &methods, &orders, sample, &common.settings(), sdpa_dump.as_deref())
                .map_err(|e| Failure::Solve(e.to_string()))?;
            print!("{}", table.to_markdown());
            if let Some(path) = csv {
                write_file(&path, &table.to_csv())?;
            }
            let failed = table.cells.iter().filter(|c| !c.is_optimal()).count();
            if failed > 0 {
                return Err(Failure::Solve(format!("{failed} cell(s) did not produce a certified bound")));
            }
            Ok(())
        }
        Command::Sample { config, sampling, csv } => {
            let loaded = load(&config)?;
            let resolution = sampling.sample_resolution as usize;
            let rep = sampler::lower_bound(&loaded.problem, resolution, sampling.dt)
                .map_err(|e| Failure::Input(e.to_string()))?;
            println!("problem: {}", loaded.name);
            println!("trajectories: {} (escaped {}, truncated {})", rep.trajectories, rep.escaped, rep.truncated);
            println!("argmax: t = {:.4}, x0 = {:?}, x = {:?}", rep.time, rep.initial, rep.state);
            println!("lower bound: {:.4}", rep.value);
            if let Some(path) = csv {
                let file = std::fs::File::create(&path)
                    .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
                sampler::write_trajectories_csv(&loaded.problem, resolution, sampling.dt, std::io::BufWriter::new(file))
                    .map_err(|e| Failure::Input(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solve(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
