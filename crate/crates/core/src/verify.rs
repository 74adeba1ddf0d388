//! Brute-force certification of synthesized gains.
//!
//! For fixed gains every condition is affine in `s` at fixed `x` and
//! bilinear jointly, so its minimum over the cell and the scale box sits at a
//! cell vertex and a box corner. Lie derivatives are taken numerically along
//! the closed-loop field.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Cell, Environment, GeometryError};
use crate::lp::{LpSolution, LpStatus};
use crate::synthesis::{ConstraintFamily, Gains, RobustLp, SynthesisConfig};

/// Residual tolerance for certification.
pub const RESIDUAL_TOL: f64 = 1e-6;

const LIE_STEP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("gains contain non-finite entries")]
    NonFinite,
    #[error("no gains for cell {0}")]
    MissingGains(usize),
    #[error("cell {cell}: |k| = {value} exceeds k_bound = {bound}")]
    OffsetBound { cell: usize, value: f64, bound: f64 },
    #[error("solution status is {0:?}, expected optimal")]
    NotOptimal(LpStatus),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyResidual {
    pub family: ConstraintFamily,
    pub worst_residual: f64,
    pub worst_x: Vec<f64>,
    /// Scale realization at the worst point, one entry per cell landmark.
    pub worst_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub cell: Option<usize>,
    pub landmarks: Vec<usize>,
    pub families: Vec<FamilyResidual>,
    pub min_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateReport {
    pub cells: Vec<VerificationReport>,
    pub failing: Vec<usize>,
    pub pass: bool,
}

/// `max_{lo <= s <= hi} s·m`, taken coordinatewise.
pub fn box_max(m: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    m.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (a, b))| (a * v).max(b * v))
        .sum()
}

/// The maximizing corner of [`box_max`].
pub fn box_max_corner(m: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (a, b))| if b * v >= a * v { *b } else { *a })
        .collect()
}

/// Closed-loop evaluator for one cell.
struct ClosedLoop<'a> {
    cell: &'a Cell,
    env: &'a Environment,
    gains: &'a Gains,
    cfg: &'a SynthesisConfig,
    landmarks: DMatrix<f64>,
}

impl<'a> ClosedLoop<'a> {
    fn new(
        cell: &'a Cell,
        env: &'a Environment,
        gains: &'a Gains,
        cfg: &'a SynthesisConfig,
        ids: &[usize],
    ) -> Result<Self, VerifyError> {
        let n = env.state_dim();
        let m = env.dynamics().input_dim();
        if gains.feedback.nrows() != m || gains.feedback.ncols() != n * ids.len() || gains.offset.len() != m {
            return Err(VerifyError::Dimension(format!(
                "gains are {}x{} + {}, expected {m}x{} + {m}",
                gains.feedback.nrows(),
                gains.feedback.ncols(),
                gains.offset.len(),
                n * ids.len()
            )));
        }
        if !gains.is_finite() {
            return Err(VerifyError::NonFinite);
        }
        Ok(Self {
            cell,
            env,
            gains,
            cfg,
            landmarks: env.landmarks().select_columns(ids.iter()),
        })
    }

    fn input(&self, x: &DVector<f64>, s: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut y = DVector::zeros(n * s.len());
        for (j, sj) in s.iter().enumerate() {
            for t in 0..n {
                y[j * n + t] = sj * (self.landmarks[(t, j)] - x[t]);
            }
        }
        &self.gains.feedback * y + &self.gains.offset
    }

    fn field(&self, x: &DVector<f64>, s: &[f64]) -> DVector<f64> {
        let d = self.env.dynamics();
        d.a() * x + d.b() * self.input(x, s)
    }

    /// Every condition at `(x, s)`, sign chosen so that `>= 0` is satisfied.
    fn residuals(&self, x: &DVector<f64>, s: &[f64]) -> Vec<(ConstraintFamily, f64)> {
        let f = self.field(x, s);
        let ahead = x + &f * LIE_STEP;
        let behind = x - &f * LIE_STEP;
        let mut out = Vec::new();
        let h = self.cell.barrier_values(x);
        let h_ahead = self.cell.barrier_values(&ahead);
        let h_behind = self.cell.barrier_values(&behind);
        for i in 0..h.len() {
            let dh = (h_ahead[i] - h_behind[i]) / (2.0 * LIE_STEP);
            out.push((ConstraintFamily::Cbf(i), dh + self.cfg.c_h * h[i]));
        }
        let v = self.cell.lyapunov(x);
        let dv = (self.cell.lyapunov(&ahead) - self.cell.lyapunov(&behind)) / (2.0 * LIE_STEP);
        out.push((ConstraintFamily::Clf, -(dv + self.cfg.c_v * v)));
        if self.cfg.enforce_input_set {
            if let Some(set) = self.env.input_set() {
                let u = self.input(x, s);
                for r in 0..set.num_rows() {
                    let val = set.b()[r] - set.a().row(r).transpose().dot(&u);
                    out.push((ConstraintFamily::Input(r), val));
                }
            }
        }
        out
    }
}

/// All conditions evaluated at one `(x, s)` pair (`s` indexed by cell landmark).
pub fn pointwise_residuals(
    cell: &Cell,
    env: &Environment,
    gains: &Gains,
    cfg: &SynthesisConfig,
    x: &DVector<f64>,
    s: &[f64],
) -> Result<Vec<(ConstraintFamily, f64)>, VerifyError> {
    let ids = landmark_ids(cell, env);
    if s.len() != ids.len() {
        return Err(VerifyError::Dimension(format!(
            "{} scales for {} landmarks",
            s.len(),
            ids.len()
        )));
    }
    Ok(ClosedLoop::new(cell, env, gains, cfg, &ids)?.residuals(x, s))
}

fn check_bounds(cfg: &SynthesisConfig, env: &Environment) -> Result<(), VerifyError> {
    let n = env.num_landmarks();
    if cfg.s_min.len() != n || cfg.s_max.len() != n {
        return Err(VerifyError::Dimension(format!("scale bounds must have {n} entries")));
    }
    Ok(())
}

fn landmark_ids(cell: &Cell, env: &Environment) -> Vec<usize> {
    cell.landmark_ids()
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| (0..env.num_landmarks()).collect())
}

/// Worst residual of every condition over cell vertices and scale-box corners.
pub fn worst_case_residuals(
    cell: &Cell,
    env: &Environment,
    gains: &Gains,
    cfg: &SynthesisConfig,
) -> Result<VerificationReport, VerifyError> {
    check_bounds(cfg, env)?;
    let ids = landmark_ids(cell, env);
    let loop_ = ClosedLoop::new(cell, env, gains, cfg, &ids)?;
    let lo: Vec<f64> = ids.iter().map(|&j| cfg.s_min[j]).collect();
    let hi: Vec<f64> = ids.iter().map(|&j| cfg.s_max[j]).collect();
    let count = ids.len();
    let zero = vec![0.0; count];
    let mut worst: Vec<FamilyResidual> = Vec::new();
    for v in cell.polytope().vertices()? {
        let base = loop_.residuals(&v, &zero);
        // Slopes in s from unit probes; every residual is affine in s.
        let slopes: Vec<Vec<(ConstraintFamily, f64)>> = (0..count)
            .map(|j| {
                let mut e = zero.clone();
                e[j] = 1.0;
                loop_.residuals(&v, &e)
            })
            .collect();
        for (k, (family, g0)) in base.iter().enumerate() {
            let neg_slope: Vec<f64> = slopes.iter().map(|sl| -(sl[k].1 - g0)).collect();
            let value = g0 - box_max(&neg_slope, &lo, &hi);
            let corner = box_max_corner(&neg_slope, &lo, &hi);
            match worst.iter_mut().find(|w| w.family == *family) {
                Some(w) if w.worst_residual <= value => {}
                Some(w) => {
                    w.worst_residual = value;
                    w.worst_x = v.iter().copied().collect();
                    w.worst_s = corner;
                }
                None => worst.push(FamilyResidual {
                    family: *family,
                    worst_residual: value,
                    worst_x: v.iter().copied().collect(),
                    worst_s: corner,
                }),
            }
        }
    }
    let min_residual = worst.iter().map(|w| w.worst_residual).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport {
        cell: None,
        landmarks: ids,
        pass: min_residual >= -RESIDUAL_TOL,
        families: worst,
        min_residual,
        tolerance: RESIDUAL_TOL,
    })
}

/// Verifies every cell of `env` under one configuration. Offsets beyond
/// `k_bound` are rejected before any evaluation.
pub fn check_gains(
    env: &Environment,
    gains: &BTreeMap<usize, Gains>,
    cfg: &SynthesisConfig,
) -> Result<AggregateReport, VerifyError> {
    check_gains_with(env, gains, |_| cfg)
}

/// As [`check_gains`], with the configuration chosen per cell.
pub fn check_gains_with<'c>(
    env: &Environment,
    gains: &BTreeMap<usize, Gains>,
    cfg: impl Fn(usize) -> &'c SynthesisConfig + Sync,
) -> Result<AggregateReport, VerifyError> {
    for i in 0..env.cells().len() {
        let g = gains.get(&i).ok_or(VerifyError::MissingGains(i))?;
        let bound = cfg(i).k_bound;
        if let Some(k) = g.offset.iter().find(|k| k.is_nan() || k.abs() > bound + 1e-9) {
            return Err(VerifyError::OffsetBound {
                cell: i,
                value: k.abs(),
                bound,
            });
        }
    }
    let cells = env
        .cells()
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut r = worst_case_residuals(c, env, &gains[&i], cfg(i))?;
            r.cell = Some(i);
            Ok(r)
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let failing: Vec<usize> = cells.iter().filter(|r| !r.pass).filter_map(|r| r.cell).collect();
    Ok(AggregateReport {
        pass: failing.is_empty(),
        failing,
        cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapEntry {
    pub family: ConstraintFamily,
    /// `None` for the scalar constraint, otherwise the state coordinate.
    pub coordinate: Option<usize>,
    pub gap: f64,
    /// `max |P⁺ - P⁻ - M|`.
    pub equality_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    pub min_gap: f64,
    pub max_gap: f64,
    pub max_equality_residual: f64,
    pub pass: bool,
}

/// Checks every scale-layer dual block of an optimal robust solution against
/// the box maximum of its coefficient vector, recomputed from `K`.
pub fn duality_gap_check(
    robust: &RobustLp,
    solution: &LpSolution,
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
) -> Result<GapReport, VerifyError> {
    if solution.status != LpStatus::Optimal {
        return Err(VerifyError::NotOptimal(solution.status));
    }
    let layout = &robust.layout;
    let y = &solution.y;
    let n = layout.state_dim;
    let m = layout.input_dim;
    let count = layout.landmarks;
    if y.len() != layout.total {
        return Err(VerifyError::Dimension("solution length differs from layout".into()));
    }
    let k = DMatrix::from_fn(m, n * count, |r, c| y[layout.feedback_var(r, c)]);
    check_bounds(cfg, env)?;
    let ids = landmark_ids(cell, env);
    let l = env.landmarks().select_columns(ids.iter());
    let b = env.dynamics().b();
    let (a_h, _) = cell.barrier_rows();
    let lo: Vec<f64> = ids.iter().map(|&j| cfg.s_min[j]).collect();
    let hi: Vec<f64> = ids.iter().map(|&j| cfg.s_max[j]).collect();
    if lo != robust.s_min || hi != robust.s_max {
        return Err(VerifyError::Dimension(
            "scale bounds differ from the assembled program".into(),
        ));
    }
    let (lo, hi) = (&lo, &hi);

    let mut entries = Vec::new();
    for block in layout.blocks() {
        let w: DVector<f64> = match block.family {
            ConstraintFamily::Cbf(i) => b.transpose() * a_h.row(i).transpose(),
            ConstraintFamily::Clf => -(b.transpose() * cell.exit_dir()),
            ConstraintFamily::Input(r) => match env.input_set() {
                Some(u) => u.a().row(r).transpose(),
                None => return Err(VerifyError::Dimension("input family without input set".into())),
            },
        };
        // Row j of wk is w^T K_j.
        let wk: Vec<DVector<f64>> = (0..count).map(|j| k.columns(j * n, n).transpose() * &w).collect();
        let mut check = |coordinate: Option<usize>, p: &std::ops::Range<usize>, mvec: Vec<f64>| {
            let plus = &y.as_slice()[p.start..p.start + count];
            let minus = &y.as_slice()[p.start + count..p.end];
            let eq = (0..count)
                .map(|j| (plus[j] - minus[j] - mvec[j]).abs())
                .fold(0.0, f64::max);
            let dual: f64 = (0..count).map(|j| hi[j] * plus[j] - lo[j] * minus[j]).sum();
            entries.push(GapEntry {
                family: block.family,
                coordinate,
                gap: dual - box_max(&mvec, lo, hi),
                equality_residual: eq,
            });
        };
        let scalar: Vec<f64> = (0..count).map(|j| wk[j].dot(&(l.column(j) - &robust.x_ref))).collect();
        check(None, &block.p_scalar, scalar);
        for t in 0..n {
            let coeff: Vec<f64> = (0..count).map(|j| -wk[j][t]).collect();
            check(Some(t), &block.p_coord[t], coeff);
        }
    }
    let min_gap = entries.iter().map(|e| e.gap).fold(f64::INFINITY, f64::min);
    let max_gap = entries.iter().map(|e| e.gap).fold(f64::NEG_INFINITY, f64::max);
    let max_eq = entries.iter().map(|e| e.equality_residual).fold(0.0, f64::max);
    Ok(GapReport {
        pass: min_gap >= -RESIDUAL_TOL && max_eq <= RESIDUAL_TOL,
        entries,
        min_gap,
        max_gap,
        max_equality_residual: max_eq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::load_environment;
    use crate::lp::solve_lp;
    use crate::synthesis::{assemble_robust_lp, synthesize_cell};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_env() -> Environment {
        load_environment(
            r#"{
                "dynamics": {"A": [[0, 0], [0, 0]], "B": [[1, 0], [0, 1]]},
                "landmarks": [[4, 8], [12, 8]],
                "cells": [{
                    "halfspaces": {"A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [10, 0, 10, 0]},
                    "exit_face": 0,
                    "next_cell": null
                }]
            }"#,
        )
        .unwrap()
    }

    fn zero_gains() -> Gains {
        Gains {
            feedback: DMatrix::zeros(2, 4),
            offset: DVector::zeros(2),
        }
    }

    fn enumerate_box_max(m: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let n = m.len();
        (0u32..1 << n)
            .map(|mask| {
                (0..n)
                    .map(|j| if mask >> j & 1 == 1 { hi[j] * m[j] } else { lo[j] * m[j] })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn box_max_matches_corner_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=10 {
            for _ in 0..20 {
                let m: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let lo: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..2.0)).collect();
                let a = box_max(&m, &lo, &hi);
                let b = enumerate_box_max(&m, &lo, &hi);
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
                let corner = box_max_corner(&m, &lo, &hi);
                let at: f64 = corner.iter().zip(&m).map(|(s, v)| s * v).sum();
                assert!((at - a).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn zero_controller_passes_barriers_and_fails_decrease() {
        let env = square_env();
        let cfg = SynthesisConfig::new(2);
        let r = worst_case_residuals(env.cell(0), &env, &zero_gains(), &cfg).unwrap();
        for f in &r.families {
            match f.family {
                ConstraintFamily::Cbf(_) => assert!(f.worst_residual.abs() <= 1e-9),
                ConstraintFamily::Clf => assert!(f.worst_residual < -1.0),
                _ => unreachable!(),
            }
        }
        assert!(!r.pass);
    }

    #[test]
    fn synthesized_gains_pass_and_bound_sampled_residuals() {
        let env = square_env();
        let cfg = SynthesisConfig::new(2);
        let cell = env.cell(0);
        let res = synthesize_cell(cell, &env, &cfg).unwrap();
        let report = worst_case_residuals(cell, &env, &res.gains, &cfg).unwrap();
        assert!(report.pass, "{report:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = DVector::from_vec(vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]);
            let s: Vec<f64> = (0..2).map(|_| rng.random_range(cfg.s_min[0]..cfg.s_max[0])).collect();
            for (fam, val) in pointwise_residuals(cell, &env, &res.gains, &cfg, &x, &s).unwrap() {
                let w = report.families.iter().find(|f| f.family == fam).unwrap();
                assert!(val >= w.worst_residual - 1e-9, "{fam}: {val} < {}", w.worst_residual);
            }
        }
    }

    #[test]
    fn vertex_maximum_dominates_dense_sampling() {
        let env = square_env();
        let poly = env.cell(0).polytope();
        let verts = poly.vertices().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c = DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let vmax = verts.iter().map(|v| c.dot(v)).fold(f64::NEG_INFINITY, f64::max);
            let mut smax = f64::NEG_INFINITY;
            for i in 0..=100 {
                for j in 0..=100 {
                    let x = DVector::from_vec(vec![i as f64 / 10.0, j as f64 / 10.0]);
                    smax = smax.max(c.dot(&x));
                }
            }
            assert!((smax - vmax).abs() <= 1e-9);
        }
    }

    #[test]
    fn offset_bound_and_missing_gains_rejected() {
        let env = square_env();
        let cfg = SynthesisConfig::new(2);
        let mut g = zero_gains();
        g.offset[0] = 11.0;
        let map: BTreeMap<usize, Gains> = [(0, g)].into();
        assert!(matches!(
            check_gains(&env, &map, &cfg),
            Err(VerifyError::OffsetBound { cell: 0, .. })
        ));
        assert!(matches!(
            check_gains(&env, &BTreeMap::new(), &cfg),
            Err(VerifyError::MissingGains(0))
        ));
    }

    #[test]
    fn perturbed_gain_flags_cell() {
        let env = square_env();
        let cfg = SynthesisConfig::new(2);
        let mut g = synthesize_cell(env.cell(0), &env, &cfg).unwrap().gains;
        assert!(check_gains(&env, &[(0, g.clone())].into(), &cfg).unwrap().pass);
        g.feedback[(0, 0)] += 10.0;
        let rep = check_gains(&env, &[(0, g)].into(), &cfg).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.failing, vec![0]);
    }

    #[test]
    fn duality_gaps_nonnegative_and_perturbation_detected() {
        let env = square_env();
        let cell = env.cell(0);
        for cfg in [SynthesisConfig::new(2), SynthesisConfig::uniform(2, 1.0, 1.0)] {
            let robust = assemble_robust_lp(cell, &env, &cfg).unwrap();
            let sol = solve_lp(&robust.lp).unwrap();
            let rep = duality_gap_check(&robust, &sol, cell, &env, &cfg).unwrap();
            assert!(rep.pass, "{rep:?}");

            let mut bad = sol.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let block = &robust.layout.clf.p_scalar;
            for v in block.clone() {
                bad.y[v] += rng.random_range(0.01..1.0);
            }
            bad.y[block.start] += 0.5;
            let rep = duality_gap_check(&robust, &bad, cell, &env, &cfg).unwrap();
            assert!(!rep.pass);
        }
    }
}
