//! Fixed-step RK4 trajectory sampling over a grid of initial conditions,
//! giving lower bounds on the peak value.

use crate::semialg::{SemialgebraicSet, SetError};
use crate::system::{cartesian, linspace, PeakProblem, SystemError};
use crate::poly::PolyError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Membership tolerance for `X` and `X0`.
pub const SET_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("initial set has no bounding box to grid")]
    NoBounds,
    #[error("no grid point of the bounding box lies in the initial set")]
    EmptyGrid,
    #[error("initial point {0:?} is not in the initial set")]
    NotInitial(Vec<f64>),
    #[error("failed to write trajectories: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// First time at which a step left `X`; the state is frozen before it.
    pub escape_time: Option<f64>,
    /// Set when a denominator vanished mid-step and integration stopped.
    pub singularity: Option<String>,
}

impl Trajectory {
    pub fn escaped(&self) -> bool {
        self.escape_time.is_some()
    }
}

/// Best sampled point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub value: f64,
    pub time: f64,
    pub initial: Vec<f64>,
    pub state: Vec<f64>,
    pub resolution: usize,
    pub dt: f64,
    pub trajectories: usize,
    pub escaped: usize,
    pub truncated: usize,
}

fn rk4_step(problem: &PeakProblem, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>, SystemError> {
    let f = &problem.dynamics;
    let n = x.len();
    let shifted = |k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = f.evaluate_rhs(t, x)?;
    let k2 = f.evaluate_rhs(t + 0.5 * h, &shifted(&k1, 0.5 * h))?;
    let k3 = f.evaluate_rhs(t + 0.5 * h, &shifted(&k2, 0.5 * h))?;
    let k4 = f.evaluate_rhs(t + h, &shifted(&k3, h))?;
    Ok((0..n).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Classical RK4 on `[0, T]` from `x0`, stopping at the first step that
/// leaves `X` (the last step is shortened to land on `T`).
pub fn integrate(problem: &PeakProblem, x0: &[f64], dt: f64) -> Result<Trajectory, SamplerError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SamplerError::BadStep(dt));
    }
    if !problem.initial_set.contains(x0, SET_TOL)? {
        return Err(SamplerError::NotInitial(x0.to_vec()));
    }
    let horizon = problem.horizon;
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        escape_time: None,
        singularity: None,
    };
    let mut x = x0.to_vec();
    for i in 0..steps {
        let t = i as f64 * dt;
        let t_next = if i + 1 == steps { horizon } else { (i + 1) as f64 * dt };
        let next = match rk4_step(problem, t, &x, t_next - t) {
            Ok(v) => v,
            Err(e @ SystemError::Singularity { .. }) => {
                traj.singularity = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if !problem.state_space.contains(&next, SET_TOL)? {
            traj.escape_time = Some(t_next);
            break;
        }
        traj.times.push(t_next);
        traj.states.push(next.clone());
        x = next;
    }
    Ok(traj)
}

/// Uniform grid over the bounding box of `x0` with `resolution` nodes per
/// free axis; pinned coordinates take their fixed value.
pub fn grid_initial_set(x0: &SemialgebraicSet, resolution: usize) -> Result<Vec<Vec<f64>>, SamplerError> {
    if resolution < 2 {
        return Err(SamplerError::Resolution(resolution));
    }
    let (lo, hi) = x0.bounds().ok_or(SamplerError::NoBounds)?;
    let fixed = x0.fixed_coordinates();
    let axes: Vec<Vec<f64>> = (0..lo.len())
        .map(|i| match fixed[i] {
            Some(v) => vec![v],
            None if lo[i] == hi[i] => vec![lo[i]],
            None => linspace(lo[i], hi[i], resolution),
        })
        .collect();
    let mut out = Vec::new();
    for p in cartesian(&axes) {
        if x0.contains(&p, SET_TOL)? {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(SamplerError::EmptyGrid);
    }
    Ok(out)
}

struct Best {
    value: f64,
    time: f64,
    state: Vec<f64>,
}

fn best_on(problem: &PeakProblem, traj: &Trajectory) -> Result<Best, SamplerError> {
    let mut best = Best { value: f64::NEG_INFINITY, time: 0.0, state: Vec::new() };
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let v = problem.objective.evaluate(x)?;
        if v > best.value {
            best = Best { value: v, time: *t, state: x.clone() };
        }
    }
    Ok(best)
}

/// Max of `p` over every RK4 point of every gridded trajectory. Ties go to
/// the first grid point, so the result does not depend on scheduling.
pub fn lower_bound(problem: &PeakProblem, resolution: usize, dt: f64) -> Result<SampleReport, SamplerError> {
    let grid = grid_initial_set(&problem.initial_set, resolution)?;
    let results: Vec<(Best, bool, bool)> = grid
        .par_iter()
        .map(|x0| {
            let traj = integrate(problem, x0, dt)?;
            Ok((best_on(problem, &traj)?, traj.escaped(), traj.singularity.is_some()))
        })
        .collect::<Result<_, SamplerError>>()?;
    let mut report = SampleReport {
        value: f64::NEG_INFINITY,
        time: 0.0,
        initial: Vec::new(),
        state: Vec::new(),
        resolution,
        dt,
        trajectories: grid.len(),
        escaped: 0,
        truncated: 0,
    };
    for (x0, (best, escaped, truncated)) in grid.iter().zip(results) {
        report.escaped += escaped as usize;
        report.truncated += truncated as usize;
        if best.value > report.value {
            report.value = best.value;
            report.time = best.time;
            report.initial = x0.clone();
            report.state = best.state;
        }
    }
    Ok(report)
}

/// Writes `trajectory,t,x1..xn,p` rows for every gridded trajectory.
pub fn write_trajectories_csv<W: Write>(
    problem: &PeakProblem,
    resolution: usize,
    dt: f64,
    out: W,
) -> Result<(), SamplerError> {
    let grid = grid_initial_set(&problem.initial_set, resolution)?;
    let trajs: Vec<Trajectory> =
        grid.par_iter().map(|x0| integrate(problem, x0, dt)).collect::<Result<_, SamplerError>>()?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend(problem.state_context().names().iter().cloned());
    header.push("p".into());
    w.write_record(&header).map_err(csv_io)?;
    for (id, traj) in trajs.iter().enumerate() {
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let mut row = vec![id.to_string(), t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.push(problem.objective.evaluate(x)?.to_string());
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SamplerError {
    SamplerError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Polynomial, VariableContext};
    use crate::system::fixtures::*;
    use crate::system::RationalDynamics;

    fn decay() -> PeakProblem {
        let tx = VariableContext::with_time("t", &["x"]).unwrap();
        let x = VariableContext::new(["x"]).unwrap();
        let f = Polynomial::var(&tx, 1).unwrap().scale(-1.0);
        let dynamics = RationalDynamics::new(&tx, vec![f], vec![]).unwrap();
        PeakProblem::new(
            dynamics,
            SemialgebraicSet::boxed(&x, &[-2.0], &[2.0]).unwrap(),
            SemialgebraicSet::boxed(&x, &[1.0], &[1.0]).unwrap(),
            1.0,
            Polynomial::var(&x, 0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let problem = decay();
        let err = |dt: f64| {
            let traj = integrate(&problem, &[1.0], dt).unwrap();
            assert!((traj.times.last().unwrap() - 1.0).abs() < 1e-12);
            (traj.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
        };
        let e: Vec<f64> = [1e-1, 5e-2, 2.5e-2].iter().map(|&dt| err(dt)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn stationary_trajectories_are_constant() {
        let problem = stationary();
        let traj = integrate(&problem, &[0.3, 0.5], 0.1).unwrap();
        assert!(traj.states.iter().all(|x| x == &vec![0.3, 0.5]));
        assert_eq!(traj.times.len(), 61);
        let rep = lower_bound(&problem, 41, 0.5).unwrap();
        assert!((rep.value - 0.6).abs() < 1e-12, "{rep:?}");
    }

    #[test]
    fn equilibrium_is_held() {
        let problem = michaelis_menten();
        let xeq = [0.3203, 0.7027];
        let rhs = problem.dynamics.evaluate_rhs(0.0, &xeq).unwrap();
        assert!(rhs.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-3);
        // The equilibrium lies outside the disc X0; integrate it directly.
        let free = PeakProblem::new(
            problem.dynamics.clone(),
            problem.state_space.clone(),
            problem.state_space.clone(),
            problem.horizon,
            problem.objective.clone(),
        )
        .unwrap();
        let traj = integrate(&free, &xeq, 1e-2).unwrap();
        for x in &traj.states {
            assert!((x[0] - xeq[0]).abs() < 1e-3 && (x[1] - xeq[1]).abs() < 1e-3, "{x:?}");
        }
    }

    #[test]
    fn escape_freezes_trajectory() {
        let tx = VariableContext::with_time("t", &["x"]).unwrap();
        let x = VariableContext::new(["x"]).unwrap();
        let dynamics = RationalDynamics::new(&tx, vec![Polynomial::constant(&tx, 1.0)], vec![]).unwrap();
        let problem = PeakProblem::new(
            dynamics,
            SemialgebraicSet::boxed(&x, &[0.0], &[1.0]).unwrap(),
            SemialgebraicSet::boxed(&x, &[0.0], &[0.0]).unwrap(),
            3.0,
            Polynomial::var(&x, 0).unwrap(),
        )
        .unwrap();
        let traj = integrate(&problem, &[0.0], 0.25).unwrap();
        assert_eq!(traj.escape_time, Some(1.25));
        assert!(traj.states.iter().all(|s| s[0] <= 1.0 + SET_TOL));
        assert_eq!(lower_bound(&problem, 2, 0.25).unwrap().value, 1.0);
    }

    #[test]
    fn grids() {
        let x = VariableContext::new(["a", "b"]).unwrap();
        let unit = SemialgebraicSet::boxed(&x, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(grid_initial_set(&unit, 2).unwrap().len(), 4);
        assert!(matches!(grid_initial_set(&unit, 1), Err(SamplerError::Resolution(1))));
        let disc = michaelis_menten().initial_set;
        let n = grid_initial_set(&disc, 50).unwrap().len() as f64;
        let expected = std::f64::consts::FRAC_PI_4 * 2500.0;
        assert!((n - expected).abs() < 0.05 * expected, "{n}");
        let tw = grid_initial_set(&twist().initial_set, 40).unwrap();
        assert_eq!(tw.len(), 1600);
        assert!(tw.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn mm_path_stays_below_certified_bound() {
        let problem = michaelis_menten();
        let traj = integrate(&problem, &[0.3, 0.6], 1e-3).unwrap();
        let peak = traj.states.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!(peak <= 0.8159, "{peak}");
    }

    #[test]
    fn mm_grid_bound_approaches_boundary_peak() {
        // A tight scipy integration (rtol 1e-10) over 721 points of the
        // disc boundary peaks at 0.81572 from (0.0199, 0.4075).
        let rep = lower_bound(&michaelis_menten(), 50, 1e-2).unwrap();
        assert!(rep.value <= 0.81572 + 1e-4 && rep.value >= 0.81572 - 5e-3, "{rep:?}");
        assert!(rep.value <= 0.8159);
        assert_eq!(rep.escaped, 0);
    }

    #[test]
    fn twist_grid_bound() {
        let rep = lower_bound(&twist(), 50, 1e-2).unwrap();
        assert!((rep.value - 0.3489).abs() <= 0.01, "{rep:?}");
        assert_eq!(rep.initial[2], 0.0);
    }

    #[test]
    fn refinement_never_lowers_the_bound() {
        let problem = michaelis_menten();
        let coarse = lower_bound(&problem, 9, 2e-2).unwrap();
        let fine = lower_bound(&problem, 17, 2e-2).unwrap();
        assert!(fine.value >= coarse.value - 1e-9);
    }

    #[test]
    fn deterministic_under_parallelism() {
        let problem = michaelis_menten();
        let a = lower_bound(&problem, 12, 5e-2).unwrap();
        let b = lower_bound(&problem, 12, 5e-2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_dump_has_one_row_per_point() {
        let problem = stationary();
        let mut buf = Vec::new();
        write_trajectories_csv(&problem, 3, 3.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("trajectory,t,x1,x2,p"));
        let grid = grid_initial_set(&problem.initial_set, 3).unwrap().len();
        assert_eq!(lines.count(), grid * 3);
    }
}
