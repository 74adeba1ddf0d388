use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Polytope};

const ON_FACE_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-6;

/// One convex region of the decomposition with its exit face.
#[derive(Debug, Clone)]
pub struct Cell {
    polytope: Polytope,
    exit_face: usize,
    exit_dir: DVector<f64>,
    exit_point: DVector<f64>,
    next_cell: Option<usize>,
    landmark_ids: Option<Vec<usize>>,
}

impl Cell {
    /// `exit_point` defaults to the centroid of the exit face's vertices and
    /// `exit_dir` to the normalized exit-face row.
    pub fn new(
        polytope: Polytope,
        exit_face: usize,
        exit_point: Option<DVector<f64>>,
        exit_dir: Option<DVector<f64>>,
        next_cell: Option<usize>,
        landmark_ids: Option<Vec<usize>>,
    ) -> Result<Self, GeometryError> {
        let rows = polytope.num_rows();
        let n = polytope.dim();
        if exit_face >= rows {
            return Err(GeometryError::ExitFaceOutOfRange {
                cell: 0,
                face: exit_face,
                rows,
            });
        }
        let face = polytope.a().row(exit_face).transpose();
        let normal = &face / face.norm();
        let exit_dir = match exit_dir {
            None => normal.clone(),
            Some(z) => {
                if z.len() != n {
                    return Err(GeometryError::Invalid("exit direction has wrong length".into()));
                }
                let norm = z.norm();
                if (norm - 1.0).abs() > UNIT_TOL {
                    return Err(GeometryError::Invalid(format!(
                        "exit direction is not a unit vector (norm {norm})"
                    )));
                }
                let z = if norm != 1.0 {
                    warn!("exit direction has norm {norm}; normalizing");
                    z / norm
                } else {
                    z
                };
                if (&z - &normal).norm() > UNIT_TOL {
                    return Err(GeometryError::Invalid(
                        "exit direction disagrees with the exit-face normal".into(),
                    ));
                }
                z
            }
        };
        let exit_point = match exit_point {
            Some(p) => {
                if p.len() != n {
                    return Err(GeometryError::Invalid("exit point has wrong length".into()));
                }
                p
            }
            None => {
                let verts = polytope.vertices()?;
                let on_face: Vec<_> = verts
                    .iter()
                    .filter(|v| polytope.active_rows(v, ON_FACE_TOL).contains(&exit_face))
                    .collect();
                if on_face.is_empty() {
                    return Err(GeometryError::Invalid("exit face has no vertices".into()));
                }
                on_face.iter().fold(DVector::zeros(n), |acc, v| acc + *v) / on_face.len() as f64
            }
        };
        let residual = (face.dot(&exit_point) - polytope.b()[exit_face]).abs();
        if residual > ON_FACE_TOL * face.norm().max(1.0) {
            return Err(GeometryError::Invalid(format!(
                "exit point is off the exit face by {residual:e}"
            )));
        }
        if !polytope.contains(&exit_point, ON_FACE_TOL * face.norm().max(1.0)) {
            return Err(GeometryError::Invalid("exit point lies outside the cell".into()));
        }
        Ok(Self {
            polytope,
            exit_face,
            exit_dir,
            exit_point,
            next_cell,
            landmark_ids,
        })
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn exit_face(&self) -> usize {
        self.exit_face
    }

    /// Outward unit normal `z` of the exit face.
    pub fn exit_dir(&self) -> &DVector<f64> {
        &self.exit_dir
    }

    pub fn exit_point(&self) -> &DVector<f64> {
        &self.exit_point
    }

    pub fn next_cell(&self) -> Option<usize> {
        self.next_cell
    }

    /// Landmark subset used by this cell, or `None` for all landmarks.
    pub fn landmark_ids(&self) -> Option<&[usize]> {
        self.landmark_ids.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn num_barriers(&self) -> usize {
        self.polytope.num_rows() - 1
    }

    /// Non-exit rows `(A_h, b_h)`, in their original order.
    pub fn barrier_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let a = self.polytope.a();
        let b = self.polytope.b();
        let keep: Vec<usize> = (0..a.nrows()).filter(|&i| i != self.exit_face).collect();
        let n = a.ncols();
        let a_h = DMatrix::from_fn(keep.len(), n, |i, j| a[(keep[i], j)]);
        let b_h = DVector::from_fn(keep.len(), |i, _| b[keep[i]]);
        (a_h, b_h)
    }

    /// `h(x) = b_h - A_h x`.
    pub fn barrier_values(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a_h, b_h) = self.barrier_rows();
        b_h - a_h * x
    }

    /// `V(x) = z·(x_e - x)`.
    pub fn lyapunov(&self, x: &DVector<f64>) -> f64 {
        self.exit_dir.dot(&(&self.exit_point - x))
    }
}

#[derive(Debug, Clone)]
pub struct Dynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Dynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, GeometryError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(GeometryError::Schema("A must be square and nonempty".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(GeometryError::Schema(format!(
                "B must have {n} rows and at least one column"
            )));
        }
        let m = b.ncols();
        let mut ctrb = DMatrix::zeros(n, n * m);
        let mut block = b.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &a * block;
        }
        let rank = ctrb.rank(1e-9);
        if rank < n {
            return Err(GeometryError::Uncontrollable { rank, n });
        }
        Ok(Self { a, b })
    }

    /// `A = 0`, `B = I_n`.
    pub fn single_integrator(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DMatrix::identity(n, n),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    cells: Vec<Cell>,
    landmarks: DMatrix<f64>,
    dynamics: Dynamics,
    input_set: Option<Polytope>,
}

impl Environment {
    pub fn new(
        cells: Vec<Cell>,
        landmarks: DMatrix<f64>,
        dynamics: Dynamics,
        input_set: Option<Polytope>,
    ) -> Result<Self, GeometryError> {
        let n = dynamics.state_dim();
        if landmarks.nrows() != n {
            return Err(GeometryError::Schema(format!("landmarks must be {n}-vectors")));
        }
        if landmarks.ncols() == 0 {
            return Err(GeometryError::Schema("at least one landmark is required".into()));
        }
        if let Some(u) = &input_set {
            if u.dim() != dynamics.input_dim() {
                return Err(GeometryError::Schema("input set dimension differs from B".into()));
            }
        }
        let count = cells.len();
        for (i, c) in cells.iter().enumerate() {
            if c.dim() != n {
                return Err(GeometryError::Cell {
                    cell: i,
                    reason: format!("cell is not {n}-dimensional"),
                });
            }
            if let Some(next) = c.next_cell {
                if next >= count {
                    return Err(GeometryError::Cell {
                        cell: i,
                        reason: format!("next_cell {next} out of range"),
                    });
                }
            }
            if let Some(ids) = &c.landmark_ids {
                if ids.is_empty() {
                    return Err(GeometryError::Cell {
                        cell: i,
                        reason: "empty landmark list".into(),
                    });
                }
                if let Some(bad) = ids.iter().find(|&&j| j >= landmarks.ncols()) {
                    return Err(GeometryError::Cell {
                        cell: i,
                        reason: format!("landmark id {bad} out of range"),
                    });
                }
            }
        }
        Ok(Self {
            cells,
            landmarks,
            dynamics,
            input_set,
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }

    /// `L`, one landmark per column.
    pub fn landmarks(&self) -> &DMatrix<f64> {
        &self.landmarks
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmarks.ncols()
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn input_set(&self) -> Option<&Polytope> {
        self.input_set.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    /// Global ids of the landmarks measured in cell `i`.
    pub fn cell_landmark_ids(&self, i: usize) -> Vec<usize> {
        match self.cells[i].landmark_ids() {
            Some(ids) => ids.to_vec(),
            None => (0..self.num_landmarks()).collect(),
        }
    }

    /// Landmark matrix restricted to the landmarks measured in cell `i`.
    pub fn cell_landmarks(&self, i: usize) -> DMatrix<f64> {
        let ids = self.cell_landmark_ids(i);
        self.landmarks.select_columns(ids.iter())
    }

    /// Cells visited starting from `start` until a cell repeats or a goal
    /// cell is reached. Returns the route and whether it closes a cycle.
    pub fn patrol_route(&self, start: usize) -> (Vec<usize>, bool) {
        let mut route = vec![start];
        let mut seen = vec![false; self.cells.len()];
        seen[start] = true;
        let mut cur = start;
        while let Some(next) = self.cells[cur].next_cell {
            if seen[next] {
                return (route, next == start);
            }
            seen[next] = true;
            route.push(next);
            cur = next;
        }
        (route, false)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfspacesDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSetDocument {
    #[serde(rename = "A_u")]
    pub a_u: Vec<Vec<f64>>,
    pub b_u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<HalfspacesDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
    pub exit_face: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub next_cell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<usize>>,
}

/// On-disk environment description (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDocument {
    pub dynamics: DynamicsDocument,
    pub landmarks: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_set: Option<InputSetDocument>,
    pub cells: Vec<CellDocument>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, GeometryError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(GeometryError::Schema(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl EnvironmentDocument {
    pub fn into_environment(self) -> Result<Environment, GeometryError> {
        let a = matrix(&self.dynamics.a, "dynamics.A")?;
        let b = matrix(&self.dynamics.b, "dynamics.B")?;
        let dynamics = Dynamics::new(a, b)?;
        let n = dynamics.state_dim();

        if self.landmarks.iter().any(|l| l.len() != n) {
            return Err(GeometryError::Schema(format!("landmarks must be {n}-vectors")));
        }
        let count = self.landmarks.len();
        let landmarks = DMatrix::from_fn(n, count, |i, j| self.landmarks[j][i]);

        let input_set = match self.input_set {
            None => None,
            Some(doc) => {
                let a_u = matrix(&doc.a_u, "input_set.A_u")?;
                if a_u.ncols() != dynamics.input_dim() {
                    return Err(GeometryError::Schema(
                        "input_set.A_u column count differs from B".into(),
                    ));
                }
                Some(Polytope::new(a_u, DVector::from_vec(doc.b_u))?)
            }
        };

        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, doc) in self.cells.into_iter().enumerate() {
            let tag = |e: GeometryError| match e {
                GeometryError::ExitFaceOutOfRange { face, rows, .. } => {
                    GeometryError::ExitFaceOutOfRange { cell: i, face, rows }
                }
                GeometryError::Cell { .. } | GeometryError::Schema(_) => e,
                other => GeometryError::Cell {
                    cell: i,
                    reason: other.to_string(),
                },
            };
            let polytope = match (doc.halfspaces, doc.vertices) {
                (Some(h), None) => {
                    let a = matrix(&h.a, "halfspaces.A")?;
                    if a.ncols() != n {
                        return Err(GeometryError::Schema(format!(
                            "cell {i}: halfspaces must have {n} columns"
                        )));
                    }
                    Polytope::new(a, DVector::from_vec(h.b)).map_err(tag)?
                }
                (None, Some(vs)) => {
                    let pts: Vec<DVector<f64>> = vs.into_iter().map(DVector::from_vec).collect();
                    Polytope::from_vertices_ccw(&pts).map_err(tag)?
                }
                _ => {
                    return Err(GeometryError::Schema(format!(
                        "cell {i}: exactly one of `halfspaces` or `vertices` is required"
                    )))
                }
            };
            let cell = Cell::new(
                polytope,
                doc.exit_face,
                doc.exit_point.map(DVector::from_vec),
                doc.z.map(DVector::from_vec),
                doc.next_cell,
                doc.landmarks,
            )
            .map_err(tag)?;
            cells.push(cell);
        }
        Environment::new(cells, landmarks, dynamics, input_set)
    }
}

/// Parses and validates an environment JSON document.
pub fn load_environment(text: &str) -> Result<Environment, GeometryError> {
    let doc: EnvironmentDocument = serde_json::from_str(text).map_err(|e| GeometryError::Schema(e.to_string()))?;
    doc.into_environment()
}

impl Environment {
    pub fn from_file(path: &std::path::Path) -> Result<Self, GeometryError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeometryError::Schema(format!("{}: {e}", path.display())))?;
        load_environment(&text)
    }
}
