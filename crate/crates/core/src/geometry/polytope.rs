use nalgebra::{DMatrix, DVector};

use super::GeometryError;
use crate::lp::{solve_lp, LpBuilder, LpStatus};

/// Vertices closer than this are merged during enumeration.
pub const VERTEX_TOL: f64 = 1e-9;

/// Bounded, full-dimensional polytope `{x : A x <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    /// Validates shape, rejects zero rows, and checks that the set is
    /// bounded with nonempty interior.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        let poly = Self::unchecked(a, b)?;
        poly.check_bounded_nonempty()?;
        Ok(poly)
    }

    /// Shape checks only.
    pub(crate) fn unchecked(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        let (p, n) = a.shape();
        if n == 0 {
            return Err(GeometryError::Invalid("polytope has zero dimension".into()));
        }
        if b.len() != p {
            return Err(GeometryError::Invalid(format!(
                "A has {p} rows but b has {} entries",
                b.len()
            )));
        }
        if p < n + 1 {
            return Err(GeometryError::Unbounded);
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid("non-finite polytope entry".into()));
        }
        for i in 0..p {
            if a.row(i).norm() == 0.0 {
                return Err(GeometryError::Invalid(format!("row {i} of A is zero")));
            }
        }
        Ok(Self { a, b })
    }

    /// Builds halfspaces from a counterclockwise planar vertex list. Row `i`
    /// is the edge from vertex `i` to vertex `i + 1`, with unit outward normal.
    pub fn from_vertices_ccw(vertices: &[DVector<f64>]) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::Invalid("vertex list needs at least 3 points".into()));
        }
        if vertices.iter().any(|v| v.len() != 2) {
            return Err(GeometryError::Invalid(
                "vertex lists are supported for planar cells only".into(),
            ));
        }
        let k = vertices.len();
        let mut a = DMatrix::zeros(k, 2);
        let mut b = DVector::zeros(k);
        for i in 0..k {
            let p = &vertices[i];
            let q = &vertices[(i + 1) % k];
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                return Err(GeometryError::Invalid(format!(
                    "vertices {i} and {} coincide",
                    (i + 1) % k
                )));
            }
            a[(i, 0)] = dy / len;
            a[(i, 1)] = -dx / len;
            b[i] = (a[(i, 0)] * p[0] + a[(i, 1)] * p[1]).max(a[(i, 0)] * q[0] + a[(i, 1)] * q[1]);
        }
        let poly = Self::new(a, b)?;
        // A clockwise or non-convex list leaves some input vertex outside.
        for (i, v) in vertices.iter().enumerate() {
            if !poly.contains(v, 1e-9) {
                return Err(GeometryError::Invalid(format!(
                    "vertex {i} violates the halfspaces; list must be convex and counterclockwise"
                )));
            }
        }
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.a * x - &self.b).iter().all(|r| *r <= tol)
    }

    /// Largest `r` such that the ball of radius `r` around the returned
    /// center fits inside; `None` when the polytope is empty.
    pub fn chebyshev_ball(&self) -> Result<Option<(DVector<f64>, f64)>, GeometryError> {
        let (p, n) = self.a.shape();
        let mut lp = LpBuilder::new(n + 1);
        lp.set_cost(n, -1.0);
        lp.set_bounds(n, Some(0.0), None);
        for i in 0..p {
            let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (j, self.a[(i, j)])).collect();
            terms.push((n, self.a.row(i).norm()));
            lp.add_le(terms, self.b[i]);
        }
        let sol = solve_lp(&lp.build())?;
        match sol.status {
            LpStatus::Optimal => Ok(Some((sol.y.rows(0, n).into_owned(), sol.y[n]))),
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(GeometryError::Unbounded),
        }
    }

    fn check_bounded_nonempty(&self) -> Result<(), GeometryError> {
        let (p, n) = self.a.shape();
        match self.chebyshev_ball()? {
            None => return Err(GeometryError::Empty),
            Some((_, r)) if r <= 1e-9 => return Err(GeometryError::Degenerate),
            Some(_) => {}
        }
        for j in 0..n {
            for sign in [1.0, -1.0] {
                let mut lp = LpBuilder::new(n);
                lp.set_cost(j, -sign);
                for i in 0..p {
                    lp.add_le((0..n).map(|k| (k, self.a[(i, k)])).collect(), self.b[i]);
                }
                if solve_lp(&lp.build())?.status == LpStatus::Unbounded {
                    return Err(GeometryError::Unbounded);
                }
            }
        }
        Ok(())
    }

    /// All extreme points. Planar results are ordered counterclockwise.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>, GeometryError> {
        let (p, n) = self.a.shape();
        let mut found: Vec<DVector<f64>> = Vec::new();
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            let sub_a = DMatrix::from_fn(n, n, |r, c| self.a[(subset[r], c)]);
            let sub_b = DVector::from_fn(n, |r, _| self.b[subset[r]]);
            let lu = sub_a.lu();
            if lu.determinant().abs() > 1e-12 {
                if let Some(x) = lu.solve(&sub_b) {
                    if self.contains(&x, VERTEX_TOL) && !found.iter().any(|v| (v - &x).norm() <= VERTEX_TOL) {
                        found.push(x);
                    }
                }
            }
            if !next_combination(&mut subset, p) {
                break;
            }
        }
        if found.len() < n + 1 {
            return Err(if found.is_empty() {
                GeometryError::Empty
            } else {
                GeometryError::Degenerate
            });
        }
        if n == 2 {
            sort_ccw(&mut found);
        }
        Ok(found)
    }

    /// Indices of rows active at `x` within `tol`.
    pub fn active_rows(&self, x: &DVector<f64>, tol: f64) -> Vec<usize> {
        (0..self.num_rows())
            .filter(|&i| (self.a.row(i) * x)[0] >= self.b[i] - tol)
            .collect()
    }

    /// Componentwise minimum and maximum over the vertices.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let verts = self.vertices()?;
        let n = self.dim();
        let mut lo = DVector::from_element(n, f64::INFINITY);
        let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
        for v in &verts {
            for j in 0..n {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
        Ok((lo, hi))
    }
}

fn next_combination(idx: &mut [usize], p: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < p - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn sort_ccw(points: &mut [DVector<f64>]) {
    let k = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / k;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / k;
    points.sort_by(|p, q| {
        let ap = (p[1] - cy).atan2(p[0] - cx);
        let aq = (q[1] - cy).atan2(q[0] - cx);
        ap.total_cmp(&aq)
    });
}
