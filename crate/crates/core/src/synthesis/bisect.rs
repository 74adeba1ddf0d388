//! Search for the widest uniform scale box a cell tolerates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{try_synthesize, Gains, SynthesisConfig, SynthesisError, SynthesisResult};
use crate::geometry::{Cell, Environment};

/// Upper end of the doubling bracket.
pub const ALPHA_CAP: f64 = 64.0;

#[derive(Debug, Clone)]
pub struct BisectionOutcome {
    pub alpha_star: f64,
    pub gains: Gains,
    pub result: SynthesisResult,
    /// True when the search stopped at [`ALPHA_CAP`] without finding an
    /// infeasible box.
    pub capped: bool,
    pub solves: usize,
}

/// Largest `α` (within `tol`) with the program feasible on `s ∈ [1, α]`.
pub fn bisect_smax(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
    tol: f64,
) -> Result<BisectionOutcome, SynthesisError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SynthesisError::Config(format!(
            "bisection tolerance {tol} must be positive"
        )));
    }
    let mut solves = 0;
    let mut probe = |alpha: f64| -> Result<Option<SynthesisResult>, SynthesisError> {
        solves += 1;
        try_synthesize(cell, env, &cfg.with_uniform_bounds(1.0, alpha))
    };

    let mut best = match probe(1.0)? {
        Some(r) => r,
        None => return Err(SynthesisError::NominalInfeasible),
    };
    let mut lo = 1.0;
    let mut hi = None;
    let mut alpha = 2.0;
    while alpha <= ALPHA_CAP {
        match probe(alpha)? {
            Some(r) => {
                lo = alpha;
                best = r;
                alpha *= 2.0;
            }
            None => {
                hi = Some(alpha);
                break;
            }
        }
    }
    let Some(mut hi) = hi else {
        return Ok(BisectionOutcome {
            alpha_star: lo,
            gains: best.gains.clone(),
            result: best,
            capped: true,
            solves,
        });
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Some(r) => {
                lo = mid;
                best = r;
            }
            None => hi = mid,
        }
    }
    Ok(BisectionOutcome {
        alpha_star: lo,
        gains: best.gains.clone(),
        result: best,
        capped: false,
        solves,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Ok,
    Capped,
    Infeasible,
    Error,
}

impl SweepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Capped => "capped",
            Self::Infeasible => "infeasible",
            Self::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c_v: f64,
    pub alpha_star: Option<f64>,
    pub status: SweepStatus,
}

/// Runs [`bisect_smax`] at each `c_v` in `grid`, in parallel. Failing points
/// become marked rows.
pub fn sweep_cv(cell: &Cell, env: &Environment, base: &SynthesisConfig, grid: &[f64], tol: f64) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|&c_v| {
            let mut cfg = base.clone();
            cfg.c_v = c_v;
            match bisect_smax(cell, env, &cfg, tol) {
                Ok(o) => SweepRow {
                    c_v,
                    alpha_star: Some(o.alpha_star),
                    status: if o.capped { SweepStatus::Capped } else { SweepStatus::Ok },
                },
                Err(SynthesisError::NominalInfeasible) => SweepRow {
                    c_v,
                    alpha_star: None,
                    status: SweepStatus::Infeasible,
                },
                Err(e) => {
                    log::warn!("sweep point c_v = {c_v} failed: {e}");
                    SweepRow {
                        c_v,
                        alpha_star: None,
                        status: SweepStatus::Error,
                    }
                }
            }
        })
        .collect()
}

/// `c_v,alpha_star,status` with an empty `alpha_star` on failed rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("c_v,alpha_star,status\n");
    for r in rows {
        let alpha = r.alpha_star.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.c_v, alpha, r.status.as_str()));
    }
    out
}

/// Parses [`sweep_csv`] output.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, SynthesisError> {
    let bad = |m: String| SynthesisError::Config(format!("sweep CSV: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("c_v,alpha_star,status") {
        return Err(bad("unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
            }
            let c_v = f[0].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            let alpha_star = match f[1] {
                "" => None,
                a => Some(a.parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?),
            };
            let status = match f[2] {
                "ok" => SweepStatus::Ok,
                "capped" => SweepStatus::Capped,
                "infeasible" => SweepStatus::Infeasible,
                "error" => SweepStatus::Error,
                other => return Err(bad(format!("row {}: unknown status {other}", i + 1))),
            };
            Ok(SweepRow {
                c_v,
                alpha_star,
                status,
            })
        })
        .collect()
}
