use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpError, LpSolution, LpStatus, FEASIBILITY_TOL, OPTIMALITY_TOL};

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

/// How an original variable is recovered from standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// y = offset + x[col]
    Shift { col: usize, offset: f64 },
    /// y = offset - x[col]
    Flip { col: usize, offset: f64 },
    /// y = x[pos] - x[neg]
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

/// `min c^T x, A x = b, x >= 0` with `b >= 0`.
struct StandardForm {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    kinds: Vec<ColKind>,
    /// Column that can serve as the initial basic variable for each row.
    initial_basis: Vec<usize>,
    var_map: Vec<VarMap>,
    /// Multiplier relating each standard-form row to its source row.
    row_factor: Vec<f64>,
}

fn to_standard_form(lp: &LinearProgram) -> StandardForm {
    let d = lp.dim();
    let mut var_map = Vec::with_capacity(d);
    let mut n_struct = 0usize;
    // (column, upper - lower) for shifted doubly-bounded variables
    let mut box_rows = Vec::new();
    for j in 0..d {
        match (lp.lower[j], lp.upper[j]) {
            (Some(l), u) => {
                var_map.push(VarMap::Shift {
                    col: n_struct,
                    offset: l,
                });
                if let Some(u) = u {
                    box_rows.push((n_struct, u - l));
                }
                n_struct += 1;
            }
            (None, Some(u)) => {
                var_map.push(VarMap::Flip {
                    col: n_struct,
                    offset: u,
                });
                n_struct += 1;
            }
            (None, None) => {
                var_map.push(VarMap::Split {
                    pos: n_struct,
                    neg: n_struct + 1,
                });
                n_struct += 2;
            }
        }
    }

    let mut cost = vec![0.0; n_struct];
    for j in 0..d {
        let c = lp.cost[j];
        match var_map[j] {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Flip { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Structural part of each row plus whether it carries a slack.
    let mut raw: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let substitute = |coefs: &mut dyn Iterator<Item = (usize, f64)>, rhs: f64| {
        let mut row = vec![0.0; n_struct];
        let mut rhs = rhs;
        for (j, a) in coefs {
            if a == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shift { col, offset } => {
                    row[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Flip { col, offset } => {
                    row[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        (row, rhs)
    };
    for i in 0..lp.ineq_matrix.nrows() {
        let (row, rhs) = substitute(&mut (0..d).map(|j| (j, lp.ineq_matrix[(i, j)])), lp.ineq_rhs[i]);
        raw.push((row, rhs, true));
    }
    for i in 0..lp.eq_matrix.nrows() {
        let (row, rhs) = substitute(&mut (0..d).map(|j| (j, lp.eq_matrix[(i, j)])), lp.eq_rhs[i]);
        raw.push((row, rhs, false));
    }
    for &(col, width) in &box_rows {
        let mut row = vec![0.0; n_struct];
        row[col] = 1.0;
        raw.push((row, width, true));
    }

    let m = raw.len();
    let n_slack = raw.iter().filter(|r| r.2).count();
    let mut kinds = vec![ColKind::Structural; n_struct];
    kinds.extend(std::iter::repeat_n(ColKind::Slack, n_slack));
    cost.extend(std::iter::repeat_n(0.0, n_slack));

    let mut rows = Vec::with_capacity(m);
    let mut rhs_out = Vec::with_capacity(m);
    let mut row_factor = Vec::with_capacity(m);
    let mut initial_basis = Vec::with_capacity(m);
    let mut slack_col = n_struct;
    let mut art_rows = Vec::new();
    for (i, (row, rhs, has_slack)) in raw.into_iter().enumerate() {
        let scale = row.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        let factor = sign / scale;
        let mut full: Vec<f64> = row.iter().map(|v| v * factor).collect();
        full.resize(n_struct + n_slack, 0.0);
        if has_slack {
            // The slack column is rescaled so its coefficient is ±1.
            full[slack_col] = sign;
            if sign > 0.0 {
                initial_basis.push(slack_col);
            } else {
                initial_basis.push(usize::MAX);
                art_rows.push(i);
            }
            slack_col += 1;
        } else {
            initial_basis.push(usize::MAX);
            art_rows.push(i);
        }
        rows.push(full);
        rhs_out.push(rhs * factor);
        row_factor.push(factor);
    }

    let n_base = n_struct + n_slack;
    for row in rows.iter_mut() {
        row.resize(n_base + art_rows.len(), 0.0);
    }
    for (k, &i) in art_rows.iter().enumerate() {
        rows[i][n_base + k] = 1.0;
        initial_basis[i] = n_base + k;
        kinds.push(ColKind::Artificial);
        cost.push(0.0);
    }

    StandardForm {
        rows,
        rhs: rhs_out,
        cost,
        kinds,
        initial_basis,
        var_map,
        row_factor,
    }
}

struct Tableau {
    m: usize,
    n: usize,
    /// Row-major `m x (n + 1)`; last column is the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.n + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * (self.n + 1) + self.n]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.reduced.clear();
        self.reduced.extend_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let w = self.n + 1;
                let row = &self.data[i * w..i * w + self.n];
                for (r, a) in self.reduced.iter_mut().zip(row) {
                    *r -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n + 1;
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, pr) in self.reduced.iter_mut().zip(&pivot_row[..self.n]) {
                *v -= f * pr;
            }
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimum ratio, ties to the smallest basic index.
    fn ratio_bland(&self, c: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                Some((bi, br))
                    if ratio > br + RATIO_TIE * (1.0 + br.abs())
                        || (ratio >= br - RATIO_TIE * (1.0 + br.abs()) && self.basis[bi] < self.basis[i]) =>
                {
                    Some((bi, br))
                }
                _ => Some((i, ratio)),
            };
        }
        best
    }

    /// Two-pass test: the largest pivot among rows whose ratio is within
    /// the feasibility tolerance of the minimum.
    fn ratio_harris(&self, c: usize) -> Option<(usize, f64)> {
        let bound = (0..self.m)
            .filter(|&i| self.at(i, c) > PIVOT_TOL)
            .map(|i| (self.rhs(i).max(0.0) + FEASIBILITY_TOL) / self.at(i, c))
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        (0..self.m)
            .filter(|&i| self.at(i, c) > PIVOT_TOL && self.rhs(i).max(0.0) / self.at(i, c) <= bound)
            .max_by(|&i, &k| self.at(i, c).total_cmp(&self.at(k, c)))
            .map(|i| (i, self.rhs(i).max(0.0) / self.at(i, c)))
    }

    /// Dantzig pricing, switching to Bland's rule during long degenerate
    /// runs. Returns `false` on unboundedness.
    fn iterate(&mut self, allowed: &[bool], max_iter: usize) -> Result<bool, LpError> {
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run >= DEGENERATE_RUN;
            let entering = if bland {
                (0..self.n).find(|&j| allowed[j] && self.reduced[j] < -OPTIMALITY_TOL)
            } else {
                (0..self.n)
                    .filter(|&j| allowed[j] && self.reduced[j] < -OPTIMALITY_TOL)
                    .min_by(|&a, &b| self.reduced[a].total_cmp(&self.reduced[b]))
            };
            let Some(c) = entering else {
                return Ok(true);
            };
            let best = if bland {
                self.ratio_bland(c)
            } else {
                self.ratio_harris(c)
            };
            let Some((r, ratio)) = best else {
                return Ok(false);
            };
            if ratio * -self.reduced[c] <= RATIO_TIE {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        Err(LpError::NumericalBreakdown(format!(
            "simplex exceeded {max_iter} pivots"
        )))
    }
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let sf = to_standard_form(lp);
    let m = sf.rows.len();
    let n = sf.cost.len();
    let d = lp.dim();

    let mut data = Vec::with_capacity(m * (n + 1));
    for (row, b) in sf.rows.iter().zip(&sf.rhs) {
        data.extend_from_slice(row);
        data.push(*b);
    }
    let mut t = Tableau {
        m,
        n,
        data,
        basis: sf.initial_basis.clone(),
        reduced: Vec::new(),
    };
    let max_iter = 50 * (m + n) + 10_000;

    // Phase one: minimize the sum of artificials.
    let phase1_cost: Vec<f64> = sf
        .kinds
        .iter()
        .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
        .collect();
    t.set_costs(&phase1_cost);
    let all = vec![true; n];
    if !t.iterate(&all, max_iter)? {
        return Err(LpError::NumericalBreakdown("phase one reported unbounded".into()));
    }
    let infeas: f64 = (0..m)
        .filter(|&i| sf.kinds[t.basis[i]] == ColKind::Artificial)
        .map(|i| t.rhs(i))
        .sum();
    if infeas > FEASIBILITY_TOL {
        let witness = farkas_witness(&sf, &t, &phase1_cost)?;
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            y: DVector::zeros(d),
            objective: f64::NAN,
            max_violation: f64::NAN,
            farkas_witness: Some(witness),
        });
    }

    // Drive zero-level artificials out of the basis where possible.
    for i in 0..m {
        if sf.kinds[t.basis[i]] != ColKind::Artificial {
            continue;
        }
        let col = (0..n).find(|&j| sf.kinds[j] != ColKind::Artificial && t.at(i, j).abs() > PIVOT_TOL);
        if let Some(j) = col {
            t.pivot(i, j);
        }
    }

    // Phase two.
    let allowed: Vec<bool> = sf.kinds.iter().map(|k| *k != ColKind::Artificial).collect();
    t.set_costs(&sf.cost);
    if !t.iterate(&allowed, max_iter)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            y: DVector::zeros(d),
            objective: f64::NEG_INFINITY,
            max_violation: f64::NAN,
            farkas_witness: None,
        });
    }

    let x = refine_basic_solution(&sf, &t);
    let y = recover(&sf.var_map, &x, d);
    let objective = lp.cost.dot(&y);
    let max_violation = lp.max_violation(&y);
    if max_violation > FEASIBILITY_TOL {
        return Err(LpError::NumericalBreakdown(format!(
            "optimal basis violates constraints by {max_violation:e}"
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        y,
        objective,
        max_violation,
        farkas_witness: None,
    })
}

/// Recomputes basic values from the original standard-form data to shed
/// accumulated pivoting error.
fn refine_basic_solution(sf: &StandardForm, t: &Tableau) -> Vec<f64> {
    let m = t.m;
    let mut x = vec![0.0; t.n];
    let tableau_values: Vec<f64> = (0..m).map(|i| t.rhs(i).max(0.0)).collect();
    if m == 0 {
        return x;
    }
    let b = DMatrix::from_fn(m, m, |i, k| sf.rows[i][t.basis[k]]);
    let rhs = DVector::from_column_slice(&sf.rhs);
    let solved = b.lu().solve(&rhs);
    let values = match solved {
        Some(v) if v.iter().all(|z| z.is_finite() && *z >= -FEASIBILITY_TOL) => v.iter().map(|z| z.max(0.0)).collect(),
        _ => tableau_values,
    };
    for (k, &col) in t.basis.iter().enumerate() {
        x[col] = values[k];
    }
    x
}

fn recover(var_map: &[VarMap], x: &[f64], d: usize) -> DVector<f64> {
    DVector::from_fn(d, |j, _| match var_map[j] {
        VarMap::Shift { col, offset } => offset + x[col],
        VarMap::Flip { col, offset } => offset - x[col],
        VarMap::Split { pos, neg } => x[pos] - x[neg],
    })
}

/// Extracts phase-one duals `π` with `A^T π <= 0` and `b^T π > 0`, then maps
/// them to nonnegative multipliers on the source rows.
fn farkas_witness(sf: &StandardForm, t: &Tableau, phase1_cost: &[f64]) -> Result<Vec<f64>, LpError> {
    let m = t.m;
    let pi: Vec<f64> = (0..m)
        .map(|i| {
            let col = sf.initial_basis[i];
            phase1_cost[col] - t.reduced[col]
        })
        .collect();
    let btpi: f64 = pi.iter().zip(&sf.rhs).map(|(p, b)| p * b).sum();
    let worst_col = (0..t.n)
        .filter(|&j| sf.kinds[j] != ColKind::Artificial)
        .map(|j| (0..m).map(|i| sf.rows[i][j] * pi[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    if btpi <= FEASIBILITY_TOL || worst_col > 1e-6 {
        return Err(LpError::NumericalBreakdown(format!(
            "infeasibility witness failed validation (b^T pi = {btpi:e}, max A^T pi = {worst_col:e})"
        )));
    }
    Ok(pi.iter().zip(&sf.row_factor).map(|(p, f)| -p * f).collect())
}
