//! Assembly of the robust synthesis program.
//!
//! Every constraint family (one per barrier row, the Lyapunov decrease
//! condition, and optionally one per input-set row) has the form
//!
//! ```text
//! g(x, s) = q(s)·x + r(s) <= delta      for all x in the cell, s in the box
//! q(s) = q0 + Σ_j s_j q_j(K),   r(s) = c + w·k + Σ_j s_j r_j(K)
//! ```
//!
//! where `w` is the row that multiplies the input `u`. Writing
//! `x = x_ref + ξ` with `x_ref` the lower corner of the cell's bounding box
//! makes `ξ >= 0` on the cell, so a single multiplier `λ >= 0` with
//! `A_x^T λ >= q(s)` for all `s` bounds the state maximization by
//! `b'·λ`, `b' = b_x - A_x x_ref`. The remaining maximizations over `s` are
//! box LPs replaced by their exact duals `P = [P⁺; P⁻] >= 0`,
//! `P⁺ - P⁻ = m`, value `s_max·P⁺ - s_min·P⁻`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::measurement::{measurement_operator, s_coeff_unit, s_coeff_vec};
use super::{SynthesisConfig, SynthesisError};
use crate::geometry::{Cell, Environment};
use crate::lp::{LinearProgram, LpBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "family", content = "row", rename_all = "snake_case")]
pub enum ConstraintFamily {
    Clf,
    Cbf(usize),
    Input(usize),
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Clf => write!(f, "CLF"),
            Self::Cbf(i) => write!(f, "CBF row {i}"),
            Self::Input(i) => write!(f, "input row {i}"),
        }
    }
}

/// Variables owned by one doubly-dualized constraint family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualBlock {
    pub family: ConstraintFamily,
    /// State-layer multipliers, one per cell row.
    pub lambda: Range<usize>,
    /// Box dual of the scalar (offset) constraint, `2N` entries.
    pub p_scalar: Range<usize>,
    /// Box duals of the state-coefficient constraints, one `2N` block per
    /// state coordinate.
    pub p_coord: Vec<Range<usize>>,
    pub slack: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpLayout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub landmarks: usize,
    /// `K`, stored row-major (`m x nN`).
    pub feedback: Range<usize>,
    pub offset: Range<usize>,
    pub delta_h: Range<usize>,
    pub delta_v: usize,
    pub cbf: Vec<DualBlock>,
    pub clf: DualBlock,
    pub input: Vec<DualBlock>,
    pub total: usize,
}

impl LpLayout {
    pub fn feedback_var(&self, row: usize, col: usize) -> usize {
        self.feedback.start + row * self.state_dim * self.landmarks + col
    }

    pub fn blocks(&self) -> impl Iterator<Item = &DualBlock> {
        self.cbf
            .iter()
            .chain(std::iter::once(&self.clf))
            .chain(self.input.iter())
    }

    /// Every named range, for coverage checks.
    pub fn named_ranges(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![
            ("K".to_string(), self.feedback.clone()),
            ("k".to_string(), self.offset.clone()),
            ("delta_h".to_string(), self.delta_h.clone()),
            ("delta_v".to_string(), self.delta_v..self.delta_v + 1),
        ];
        for b in self.blocks() {
            out.push((format!("lambda[{}]", b.family), b.lambda.clone()));
            out.push((format!("P_scalar[{}]", b.family), b.p_scalar.clone()));
            for (t, r) in b.p_coord.iter().enumerate() {
                out.push((format!("P_coord[{}][{t}]", b.family), r.clone()));
            }
        }
        out
    }
}

/// The assembled robust program with its variable layout.
#[derive(Debug, Clone)]
pub struct RobustLp {
    pub lp: LinearProgram,
    pub layout: LpLayout,
    /// Origin of the shifted state coordinates.
    pub x_ref: DVector<f64>,
    /// Scale bounds for the landmarks measured in this cell.
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
}

/// The affine data of one constraint family, before the `K` terms.
#[derive(Debug, Clone)]
pub(crate) struct FamilyTerms {
    pub family: ConstraintFamily,
    pub q0: DVector<f64>,
    pub constant: f64,
    /// Row multiplying the input `u`.
    pub w: DVector<f64>,
}

pub(crate) fn family_terms(cell: &Cell, env: &Environment, cfg: &SynthesisConfig) -> Vec<FamilyTerms> {
    let dynamics = env.dynamics();
    let a = dynamics.a();
    let b = dynamics.b();
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let (a_h, b_h) = cell.barrier_rows();
    let mut out = Vec::new();
    for i in 0..a_h.nrows() {
        let row = a_h.row(i).transpose();
        out.push(FamilyTerms {
            family: ConstraintFamily::Cbf(i),
            q0: (a + &eye * cfg.c_h).transpose() * &row,
            constant: -cfg.c_h * b_h[i],
            w: b.transpose() * &row,
        });
    }
    let z = cell.exit_dir();
    out.push(FamilyTerms {
        family: ConstraintFamily::Clf,
        q0: -((a + &eye * cfg.c_v).transpose() * z),
        constant: cfg.c_v * z.dot(cell.exit_point()),
        w: -(b.transpose() * z),
    });
    if cfg.enforce_input_set {
        if let Some(u) = env.input_set() {
            for r in 0..u.num_rows() {
                out.push(FamilyTerms {
                    family: ConstraintFamily::Input(r),
                    q0: DVector::zeros(n),
                    constant: -u.b()[r],
                    w: u.a().row(r).transpose(),
                });
            }
        }
    }
    out
}

/// Sparse linear form over LP variables.
type Terms = Vec<(usize, f64)>;

/// `K`-dependent coefficients of one family: `q[j][t]` is the coefficient of
/// `s_j x_t` and `r[j]` the coefficient of `s_j`.
struct FeedbackTerms {
    q: Vec<Vec<Terms>>,
    r: Vec<Terms>,
}

fn feedback_terms(w: &DVector<f64>, lvec: &DVector<f64>, layout: &LpLayout) -> Result<FeedbackTerms, SynthesisError> {
    let n = layout.state_dim;
    let count = layout.landmarks;
    let mut q = vec![vec![Terms::new(); n]; count];
    let mut r = vec![Terms::new(); count];
    let width = n * count;
    let mut basis = vec![0.0; width];
    for row in 0..layout.input_dim {
        if w[row] == 0.0 {
            continue;
        }
        for col in 0..width {
            // a = w_row · e_col^T, the contribution of K[row, col] to w K.
            basis.iter_mut().for_each(|v| *v = 0.0);
            basis[col] = w[row];
            let var = layout.feedback_var(row, col);
            let rc = s_coeff_vec(&basis, lvec.as_slice(), n, count)?;
            for (j, c) in rc.iter().enumerate() {
                if *c != 0.0 {
                    r[j].push((var, *c));
                }
            }
            for t in 0..n {
                let qc = s_coeff_unit(&basis, t, n, count)?;
                for (j, c) in qc.iter().enumerate() {
                    if *c != 0.0 {
                        // u = K D_s (Lvec - Istack x): the state enters with a minus sign.
                        q[j][t].push((var, -*c));
                    }
                }
            }
        }
    }
    Ok(FeedbackTerms { q, r })
}

struct Allocator(usize);

impl Allocator {
    fn take(&mut self, len: usize) -> Range<usize> {
        let r = self.0..self.0 + len;
        self.0 += len;
        r
    }
}

fn build_layout(
    families: &[FamilyTerms],
    n: usize,
    m: usize,
    count: usize,
    rows: usize,
    with_box_duals: bool,
) -> LpLayout {
    let mut alloc = Allocator(0);
    let feedback = alloc.take(m * n * count);
    let offset = alloc.take(m);
    let n_cbf = families
        .iter()
        .filter(|f| matches!(f.family, ConstraintFamily::Cbf(_)))
        .count();
    let delta_h = alloc.take(n_cbf);
    let delta_v = alloc.take(1).start;
    let mut blocks: Vec<DualBlock> = families
        .iter()
        .map(|f| DualBlock {
            family: f.family,
            lambda: 0..0,
            p_scalar: 0..0,
            p_coord: Vec::new(),
            slack: match f.family {
                ConstraintFamily::Cbf(i) => Some(delta_h.start + i),
                ConstraintFamily::Clf => Some(delta_v),
                ConstraintFamily::Input(_) => None,
            },
        })
        .collect();
    // Grouped as all multipliers, then scalar box duals, then coordinate box duals.
    for b in blocks.iter_mut() {
        b.lambda = alloc.take(rows);
    }
    let pw = if with_box_duals { 2 * count } else { 0 };
    for b in blocks.iter_mut() {
        b.p_scalar = alloc.take(pw);
    }
    for b in blocks.iter_mut() {
        b.p_coord = (0..n).map(|_| alloc.take(pw)).collect();
    }
    let mut cbf = Vec::new();
    let mut clf = None;
    let mut input = Vec::new();
    for b in blocks {
        match b.family {
            ConstraintFamily::Cbf(_) => cbf.push(b),
            ConstraintFamily::Clf => clf = Some(b),
            ConstraintFamily::Input(_) => input.push(b),
        }
    }
    LpLayout {
        state_dim: n,
        input_dim: m,
        landmarks: count,
        feedback,
        offset,
        delta_h,
        delta_v,
        cbf,
        clf: clf.expect("CLF family is always present"),
        input,
        total: alloc.0,
    }
}

/// Which families to include and whether to keep the objective.
#[derive(Debug, Clone, Default)]
pub(crate) struct AssemblyOptions {
    pub exclude: Vec<ConstraintFamily>,
    pub feasibility_only: bool,
}

fn set_common_bounds(
    lp: &mut LpBuilder,
    layout: &LpLayout,
    cfg: &SynthesisConfig,
    weights: &[f64],
    opts: &AssemblyOptions,
) {
    for v in layout.feedback.clone() {
        lp.set_bounds(v, Some(-cfg.gain_bound), Some(cfg.gain_bound));
    }
    for v in layout.offset.clone() {
        lp.set_bounds(v, Some(-cfg.k_bound), Some(cfg.k_bound));
    }
    for (i, v) in layout.delta_h.clone().enumerate() {
        lp.set_bounds(v, None, Some(0.0));
        if !opts.feasibility_only {
            lp.set_cost(v, weights[i]);
        }
    }
    lp.set_bounds(layout.delta_v, None, Some(0.0));
    if !opts.feasibility_only {
        lp.set_cost(layout.delta_v, cfg.w_v);
    }
    for b in layout.blocks() {
        for v in b.lambda.clone().chain(b.p_scalar.clone()) {
            lp.set_bounds(v, Some(0.0), None);
        }
        for r in &b.p_coord {
            for v in r.clone() {
                lp.set_bounds(v, Some(0.0), None);
            }
        }
    }
    if opts.feasibility_only {
        // Slack lower bounds keep the feasibility program bounded.
        for v in layout.delta_h.clone() {
            lp.set_bounds(v, Some(-1.0), Some(0.0));
        }
        lp.set_bounds(layout.delta_v, Some(-1.0), Some(0.0));
    }
}

/// Builds the doubly-dualized robust program for `cell`.
pub fn assemble_robust_lp(cell: &Cell, env: &Environment, cfg: &SynthesisConfig) -> Result<RobustLp, SynthesisError> {
    assemble_robust_with(cell, env, cfg, &AssemblyOptions::default())
}

pub(crate) fn assemble_robust_with(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
    opts: &AssemblyOptions,
) -> Result<RobustLp, SynthesisError> {
    let ctx = Context::new(cell, env, cfg)?;
    let families = family_terms(cell, env, cfg);
    let layout = build_layout(&families, ctx.n, ctx.m, ctx.count, ctx.rows, true);
    let mut lp = LpBuilder::new(layout.total);
    set_common_bounds(&mut lp, &layout, cfg, &ctx.weights, opts);

    let poly = cell.polytope();
    let (x_ref, _) = poly.bounding_box()?;
    let b_shift = poly.b() - poly.a() * &x_ref;

    for (fam, block) in families.iter().zip(ordered_blocks(&layout, &families)) {
        if opts.exclude.contains(&fam.family) {
            continue;
        }
        let fb = feedback_terms(&fam.w, &ctx.lvec, &layout)?;
        let box_value = |p: &Range<usize>| -> Terms {
            (0..ctx.count)
                .flat_map(|j| [(p.start + j, ctx.s_max[j]), (p.start + ctx.count + j, -ctx.s_min[j])])
                .collect()
        };

        // State-coefficient rows: max_s q_t(s) <= (A_x^T λ)_t.
        for t in 0..ctx.n {
            let p = &block.p_coord[t];
            for j in 0..ctx.count {
                let mut terms: Terms = vec![(p.start + j, 1.0), (p.start + ctx.count + j, -1.0)];
                terms.extend(fb.q[j][t].iter().map(|&(v, c)| (v, -c)));
                lp.add_eq(terms, 0.0);
            }
            let mut terms = box_value(p);
            for r in 0..ctx.rows {
                terms.push((block.lambda.start + r, -poly.a()[(r, t)]));
            }
            lp.add_le(terms, -fam.q0[t]);
        }

        // Scalar row: b'·λ + max_s Σ_j s_j m_j + c0 + w·k <= δ, where
        // m_j = q_j·x_ref + r_j and c0 = q0·x_ref + c.
        let p = &block.p_scalar;
        for j in 0..ctx.count {
            let mut terms: Terms = vec![(p.start + j, 1.0), (p.start + ctx.count + j, -1.0)];
            for t in 0..ctx.n {
                terms.extend(fb.q[j][t].iter().map(|&(v, c)| (v, -c * x_ref[t])));
            }
            terms.extend(fb.r[j].iter().map(|&(v, c)| (v, -c)));
            lp.add_eq(terms, 0.0);
        }
        let mut terms = box_value(p);
        for r in 0..ctx.rows {
            terms.push((block.lambda.start + r, b_shift[r]));
        }
        for (i, v) in layout.offset.clone().enumerate() {
            terms.push((v, fam.w[i]));
        }
        if let Some(d) = block.slack {
            terms.push((d, -1.0));
        }
        lp.add_le(terms, -(fam.q0.dot(&x_ref) + fam.constant));
    }

    Ok(RobustLp {
        lp: lp.build(),
        layout,
        x_ref,
        s_min: ctx.s_min,
        s_max: ctx.s_max,
    })
}

/// Single state-layer dual at a fixed scale vector `s`, in unshifted
/// coordinates with the exact equality dual `A_x^T λ = q(s)`.
pub fn assemble_fixed_scale_lp(
    cell: &Cell,
    env: &Environment,
    cfg: &SynthesisConfig,
    s: &[f64],
) -> Result<(LinearProgram, LpLayout), SynthesisError> {
    let ctx = Context::new(cell, env, cfg)?;
    if s.len() != ctx.count {
        return Err(SynthesisError::Dimension(format!(
            "scale vector has {} entries, cell measures {} landmarks",
            s.len(),
            ctx.count
        )));
    }
    let families = family_terms(cell, env, cfg);
    let layout = build_layout(&families, ctx.n, ctx.m, ctx.count, ctx.rows, false);
    let mut lp = LpBuilder::new(layout.total);
    set_common_bounds(&mut lp, &layout, cfg, &ctx.weights, &AssemblyOptions::default());
    let poly = cell.polytope();

    for (fam, block) in families.iter().zip(ordered_blocks(&layout, &families)) {
        let fb = feedback_terms(&fam.w, &ctx.lvec, &layout)?;
        for t in 0..ctx.n {
            let mut terms: Terms = (0..ctx.rows)
                .map(|r| (block.lambda.start + r, poly.a()[(r, t)]))
                .collect();
            for j in 0..ctx.count {
                terms.extend(fb.q[j][t].iter().map(|&(v, c)| (v, -s[j] * c)));
            }
            lp.add_eq(terms, fam.q0[t]);
        }
        let mut terms: Terms = (0..ctx.rows).map(|r| (block.lambda.start + r, poly.b()[r])).collect();
        for j in 0..ctx.count {
            terms.extend(fb.r[j].iter().map(|&(v, c)| (v, s[j] * c)));
        }
        for (i, v) in layout.offset.clone().enumerate() {
            terms.push((v, fam.w[i]));
        }
        if let Some(d) = block.slack {
            terms.push((d, -1.0));
        }
        lp.add_le(terms, -fam.constant);
    }
    Ok((lp.build(), layout))
}

fn ordered_blocks<'a>(layout: &'a LpLayout, families: &[FamilyTerms]) -> Vec<&'a DualBlock> {
    families
        .iter()
        .map(|f| {
            layout
                .blocks()
                .find(|b| b.family == f.family)
                .expect("every family has a block")
        })
        .collect()
}

struct Context {
    n: usize,
    m: usize,
    count: usize,
    rows: usize,
    lvec: DVector<f64>,
    s_min: Vec<f64>,
    s_max: Vec<f64>,
    weights: Vec<f64>,
}

impl Context {
    fn new(cell: &Cell, env: &Environment, cfg: &SynthesisConfig) -> Result<Self, SynthesisError> {
        let ids = cell_landmark_ids(cell, env);
        if ids.is_empty() {
            return Err(SynthesisError::Config("at least one landmark is required".into()));
        }
        cfg.validate(env.num_landmarks(), cell.num_barriers())?;
        let landmarks = env.landmarks().select_columns(ids.iter());
        let (_, lvec) = measurement_operator(&landmarks);
        Ok(Self {
            n: env.state_dim(),
            m: env.dynamics().input_dim(),
            count: ids.len(),
            rows: cell.polytope().num_rows(),
            lvec,
            s_min: ids.iter().map(|&j| cfg.s_min[j]).collect(),
            s_max: ids.iter().map(|&j| cfg.s_max[j]).collect(),
            weights: cfg.barrier_weights(cell.num_barriers()),
        })
    }
}

pub(crate) fn cell_landmark_ids(cell: &Cell, env: &Environment) -> Vec<usize> {
    match cell.landmark_ids() {
        Some(ids) => ids.to_vec(),
        None => (0..env.num_landmarks()).collect(),
    }
}
