//! Closed-loop patrol simulation with injected measurement scale errors.

mod error_model;
mod monte_carlo;
mod trace;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use error_model::{ErrorMode, ErrorModel, ScaleSampler};
pub use monte_carlo::{monte_carlo, MonteCarloSummary};
pub use trace::{trace_metrics, Termination, Trace, TraceMetrics, TraceRow};

use crate::geometry::{Dynamics, Environment};
use crate::synthesis::Gains;

/// Below this norm the control is applied unscaled.
pub const NORMALIZE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("no gains for cell {0}")]
    MissingGains(usize),
    #[error("barrier row {row} of cell {cell} violated (h = {value:e}) at t = {t}, x = {x:?}")]
    SafetyViolation {
        row: usize,
        cell: usize,
        value: f64,
        t: f64,
        x: Vec<f64>,
        trace: Box<Trace>,
    },
    #[error("state {x:?} left every cell at t = {t}")]
    LeftCells { t: f64, x: Vec<f64>, trace: Box<Trace> },
    #[error("cannot compare traces: {0}")]
    Metrics(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Normalization {
    Off,
    Speed { v_ref: f64 },
}

/// `Y = vec(diag(s)(L - x 1^T))`, one `n`-block per landmark column.
pub fn measure(x: &DVector<f64>, landmarks: &DMatrix<f64>, s: &[f64]) -> DVector<f64> {
    let n = x.len();
    let mut y = DVector::zeros(n * landmarks.ncols());
    for (j, sj) in s.iter().enumerate().take(landmarks.ncols()) {
        for t in 0..n {
            y[j * n + t] = sj * (landmarks[(t, j)] - x[t]);
        }
    }
    y
}

/// `(u_raw, u_applied)` with `u_raw = K Y + k`.
pub fn control_input(gains: &Gains, y: &DVector<f64>, normalize: Normalization) -> (DVector<f64>, DVector<f64>) {
    let raw = &gains.feedback * y + &gains.offset;
    let applied = match normalize {
        Normalization::Speed { v_ref } => {
            let norm = raw.norm();
            if norm > NORMALIZE_EPS {
                &raw * (v_ref / norm)
            } else {
                raw.clone()
            }
        }
        Normalization::Off => raw.clone(),
    };
    (raw, applied)
}

/// One classical Runge-Kutta step of `x' = A x + B u` with `u` held.
pub fn step(x: &DVector<f64>, u: &DVector<f64>, dynamics: &Dynamics, dt: f64) -> DVector<f64> {
    let bu = dynamics.b() * u;
    let f = |p: &DVector<f64>| dynamics.a() * p + &bu;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (dt / 2.0)));
    let k3 = f(&(x + &k2 * (dt / 2.0)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatrolConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default = "default_laps")]
    pub laps: usize,
    #[serde(default = "default_normalize")]
    pub normalize: Normalization,
    #[serde(default = "default_safety_tol")]
    pub safety_tol: f64,
    /// Cell the run starts in; the first cell containing `x0` when absent.
    #[serde(default)]
    pub start_cell: Option<usize>,
}

fn default_dt() -> f64 {
    0.01
}
fn default_max_time() -> f64 {
    600.0
}
fn default_laps() -> usize {
    2
}
fn default_normalize() -> Normalization {
    Normalization::Speed { v_ref: 1.0 }
}
fn default_safety_tol() -> f64 {
    1e-4
}

impl Default for PatrolConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            max_time: default_max_time(),
            laps: default_laps(),
            normalize: default_normalize(),
            safety_tol: default_safety_tol(),
            start_cell: None,
        }
    }
}

const CONTAIN_TOL: f64 = 1e-9;

fn locate(env: &Environment, x: &DVector<f64>) -> Option<usize> {
    env.cells()
        .iter()
        .position(|c| c.polytope().contains(x, CONTAIN_TOL) && c.lyapunov(x) > 0.0)
}

/// Cell whose entry closes a lap: the start cell on a cycle, otherwise the
/// first repeated cell of the route.
fn lap_anchor(env: &Environment, start: usize) -> Option<usize> {
    let (route, closes) = env.patrol_route(start);
    if closes {
        return Some(start);
    }
    let last = *route.last()?;
    env.cell(last).next_cell()
}

fn min_barrier(env: &Environment, cell: usize, x: &DVector<f64>) -> (usize, f64) {
    env.cell(cell)
        .barrier_values(x)
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
}

/// Simulates the switched closed loop from `x0` until `cfg.laps` laps, a
/// goal exit, or `cfg.max_time`.
pub fn run_patrol(
    env: &Environment,
    gains: &BTreeMap<usize, Gains>,
    errors: &ErrorModel,
    x0: &DVector<f64>,
    cfg: &PatrolConfig,
) -> Result<Trace, SimError> {
    let n = env.state_dim();
    if x0.len() != n {
        return Err(SimError::Invalid(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(SimError::Invalid(format!("dt = {} must be positive", cfg.dt)));
    }
    if !(cfg.max_time.is_finite() && cfg.max_time >= 0.0) {
        return Err(SimError::Invalid(format!(
            "max_time = {} must be nonnegative",
            cfg.max_time
        )));
    }
    errors.validate(env.num_landmarks()).map_err(SimError::Invalid)?;
    let start = match cfg.start_cell {
        Some(c) if c >= env.cells().len() => return Err(SimError::Invalid(format!("start cell {c} out of range"))),
        Some(c) if !env.cell(c).polytope().contains(x0, CONTAIN_TOL) => {
            return Err(SimError::Invalid(format!("x0 is not inside start cell {c}")))
        }
        Some(c) => c,
        None => locate(env, x0).ok_or_else(|| SimError::Invalid("x0 is not inside any cell".into()))?,
    };
    let (route, _) = env.patrol_route(start);
    if let Some(missing) = route.iter().find(|c| !gains.contains_key(c)) {
        return Err(SimError::MissingGains(*missing));
    }
    let landmarks: Vec<(Vec<usize>, DMatrix<f64>)> = (0..env.cells().len())
        .map(|i| (env.cell_landmark_ids(i), env.cell_landmarks(i)))
        .collect();
    let anchor = lap_anchor(env, start);
    let mut sampler = errors.sampler();
    let mut trace = Trace::new(cfg.dt, n, env.dynamics().input_dim(), env.num_landmarks());
    trace.cells_exited = vec![0; env.cells().len()];
    let mut x = x0.clone();
    let mut cell = start;
    let mut k: u64 = 0;

    loop {
        let t = k as f64 * cfg.dt;
        let s = sampler.draw();
        let (ids, l) = &landmarks[cell];
        let local: Vec<f64> = ids.iter().map(|&j| s[j]).collect();
        let y = measure(&x, l, &local);
        let (u_raw, u_applied) = control_input(&gains[&cell], &y, cfg.normalize);
        let (row, h_min) = min_barrier(env, cell, &x);
        trace.push(TraceRow {
            t,
            x: x.iter().copied().collect(),
            u_raw: u_raw.iter().copied().collect(),
            u_applied: u_applied.iter().copied().collect(),
            cell,
            s,
            h_min,
            v: env.cell(cell).lyapunov(&x),
        });
        if h_min < -cfg.safety_tol {
            return Err(SimError::SafetyViolation {
                row,
                cell,
                value: h_min,
                t,
                x: x.iter().copied().collect(),
                trace: Box::new(trace),
            });
        }
        if trace.termination.is_some() {
            break;
        }
        if trace.laps_completed >= cfg.laps && anchor.is_some() {
            trace.termination = Some(Termination::LapsCompleted);
            break;
        }
        if t >= cfg.max_time {
            trace.termination = Some(Termination::MaxTime);
            break;
        }

        x = step(&x, &u_applied, env.dynamics(), cfg.dt);
        k += 1;
        if env.cell(cell).lyapunov(&x) <= 0.0 {
            trace.cells_exited[cell] += 1;
            match env.cell(cell).next_cell() {
                None => trace.termination = Some(Termination::GoalReached),
                Some(next) => {
                    cell = next;
                    if Some(next) == anchor {
                        trace.laps_completed += 1;
                    }
                    if !env.cell(cell).polytope().contains(&x, cfg.safety_tol) {
                        let t = k as f64 * cfg.dt;
                        if locate(env, &x).is_none() {
                            return Err(SimError::LeftCells {
                                t,
                                x: x.iter().copied().collect(),
                                trace: Box::new(trace),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests;
