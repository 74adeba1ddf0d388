use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{run_patrol, trace_metrics, ErrorModel, PatrolConfig, SimError, Trace, TraceMetrics};
use crate::geometry::Environment;
use crate::synthesis::Gains;

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub aborted: usize,
    pub min_barrier: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub metrics: Vec<TraceMetrics>,
}

/// Runs one patrol per error model in parallel and compares each against
/// `reference`. Results keep the order of `models`.
pub fn monte_carlo(
    env: &Environment,
    gains: &BTreeMap<usize, Gains>,
    models: &[ErrorModel],
    x0: &DVector<f64>,
    cfg: &PatrolConfig,
    reference: &Trace,
) -> (MonteCarloSummary, Vec<Result<TraceMetrics, SimError>>) {
    let results: Vec<Result<TraceMetrics, SimError>> = models
        .par_iter()
        .map(|m| {
            let trace = run_patrol(env, gains, m, x0, cfg)?;
            trace_metrics(&trace, Some(reference))
        })
        .collect();
    let ok: Vec<TraceMetrics> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let mean_of = |f: fn(&TraceMetrics) -> Option<f64>| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().filter_map(f).sum::<f64>() / ok.len() as f64
        }
    };
    let summary = MonteCarloSummary {
        runs: results.len(),
        aborted: results.len() - ok.len(),
        min_barrier: ok.iter().map(|m| m.min_barrier).fold(f64::INFINITY, f64::min),
        mean_deviation: mean_of(|m| m.mean_deviation),
        max_deviation: ok.iter().filter_map(|m| m.max_deviation).fold(0.0, f64::max),
        metrics: ok,
    };
    (summary, results)
}
