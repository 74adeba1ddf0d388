use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub cell: usize,
    /// Scale realization, one entry per landmark.
    pub s: Vec<f64>,
    pub h_min: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LapsCompleted,
    GoalReached,
    MaxTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub landmarks: usize,
    pub rows: Vec<TraceRow>,
    pub laps_completed: usize,
    /// Exit count per cell.
    pub cells_exited: Vec<usize>,
    pub termination: Option<Termination>,
}

impl Trace {
    pub(crate) fn new(dt: f64, state_dim: usize, input_dim: usize, landmarks: usize) -> Self {
        Self {
            dt,
            state_dim,
            input_dim,
            landmarks,
            rows: Vec::new(),
            laps_completed: 0,
            cells_exited: Vec::new(),
            termination: None,
        }
    }

    pub(crate) fn push(&mut self, row: TraceRow) {
        if self.cells_exited.len() <= row.cell {
            self.cells_exited.resize(row.cell + 1, 0);
        }
        self.rows.push(row);
    }

    pub fn min_barrier(&self) -> f64 {
        self.rows.iter().map(|r| r.h_min).fold(f64::INFINITY, f64::min)
    }

    /// Rows split at every entry into `anchor`, one slice per lap.
    pub fn laps(&self, anchor: usize) -> Vec<&[TraceRow]> {
        let mut out = Vec::new();
        let mut begin = 0;
        for i in 1..self.rows.len() {
            if self.rows[i].cell == anchor && self.rows[i - 1].cell != anchor {
                out.push(&self.rows[begin..=i]);
                begin = i;
            }
        }
        if begin + 1 < self.rows.len() {
            out.push(&self.rows[begin..]);
        }
        out
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        cols.extend((1..=self.input_dim).map(|i| format!("u_raw{i}")));
        cols.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        cols.push("cell".into());
        cols.extend((1..=self.landmarks).map(|i| format!("s{i}")));
        cols.push("h_min".into());
        cols.push("V".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let mut f: Vec<String> = vec![r.t.to_string()];
            f.extend(r.x.iter().map(f64::to_string));
            f.extend(r.u_raw.iter().map(f64::to_string));
            f.extend(r.u_applied.iter().map(f64::to_string));
            f.push(r.cell.to_string());
            f.extend(r.s.iter().map(f64::to_string));
            f.push(r.h_min.to_string());
            f.push(r.v.to_string());
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses [`Trace::to_csv`] output. Run-level fields other than `dt`
    /// are recomputed from the rows.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Invalid(format!("trace CSV: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty input".into()))?
            .split(',')
            .collect();
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|h| {
                    h.strip_prefix(prefix)
                        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                })
                .count()
        };
        let (n, m, l) = (count("x"), count("u_raw"), count("s"));
        let mut trace = Trace::new(0.0, n, m, l);
        if header.len() != 4 + n + 2 * m + l || header.first() != Some(&"t") {
            return Err(bad("unexpected header".into()));
        }
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != header.len() {
                return Err(bad(format!("row {} has {} fields", ln + 1, vals.len())));
            }
            let num = |i: usize| -> Result<f64, SimError> {
                vals[i].parse::<f64>().map_err(|e| bad(format!("row {}: {e}", ln + 1)))
            };
            let many =
                |from: usize, len: usize| -> Result<Vec<f64>, SimError> { (from..from + len).map(num).collect() };
            let cell: usize = vals[1 + n + 2 * m]
                .parse()
                .map_err(|e| bad(format!("row {}: {e}", ln + 1)))?;
            let row = TraceRow {
                t: num(0)?,
                x: many(1, n)?,
                u_raw: many(1 + n, m)?,
                u_applied: many(1 + n + m, m)?,
                cell,
                s: many(2 + n + 2 * m, l)?,
                h_min: num(2 + n + 2 * m + l)?,
                v: num(3 + n + 2 * m + l)?,
            };
            trace.push(row);
        }
        for i in 1..trace.rows.len() {
            let (prev, cur) = (trace.rows[i - 1].cell, trace.rows[i].cell);
            if prev != cur {
                trace.cells_exited[prev] += 1;
            }
        }
        if trace.rows.len() >= 2 {
            trace.dt = trace.rows[1].t - trace.rows[0].t;
        }
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub steps: usize,
    pub duration: f64,
    pub min_barrier: f64,
    pub laps_completed: usize,
    pub cells_exited: Vec<usize>,
    pub termination: Option<Termination>,
    /// Pointwise `‖x(t) - x_ref(t)‖` over the shared horizon.
    pub mean_deviation: Option<f64>,
    pub max_deviation: Option<f64>,
}

pub fn trace_metrics(trace: &Trace, reference: Option<&Trace>) -> Result<TraceMetrics, SimError> {
    if trace.rows.is_empty() {
        return Err(SimError::Metrics("empty trace".into()));
    }
    let (mean, max) = match reference {
        None => (None, None),
        Some(r) => {
            if r.rows.is_empty() {
                return Err(SimError::Metrics("empty reference trace".into()));
            }
            if (r.dt - trace.dt).abs() > 1e-12 * trace.dt.abs().max(1.0) {
                return Err(SimError::Metrics(format!(
                    "time steps differ ({} vs {})",
                    trace.dt, r.dt
                )));
            }
            if r.state_dim != trace.state_dim {
                return Err(SimError::Metrics("state dimensions differ".into()));
            }
            let devs: Vec<f64> = trace
                .rows
                .iter()
                .zip(&r.rows)
                .map(|(a, b)| a.x.iter().zip(&b.x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .collect();
            let mean = devs.iter().sum::<f64>() / devs.len() as f64;
            (Some(mean), Some(devs.iter().copied().fold(0.0, f64::max)))
        }
    };
    Ok(TraceMetrics {
        steps: trace.rows.len(),
        duration: trace.rows.last().map_or(0.0, |r| r.t),
        min_barrier: trace.min_barrier(),
        laps_completed: trace.laps_completed,
        cells_exited: trace.cells_exited.clone(),
        termination: trace.termination,
        mean_deviation: mean,
        max_deviation: max,
    })
}
