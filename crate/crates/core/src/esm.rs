//! Numerical extended Skorokhod map for multidimensional piecewise-linear
//! inputs via projection time stepping, the per-face local-time
//! decomposition of the constraining term, and empirical Lipschitz
//! reporting.
//!
//! The scheme starts from the projected initial point and advances with
//! `Z_{k+1} = pi(Z_k + X(t_{k+1}) - X(t_k))`. It is exact over monotone
//! linear segments for the supported projection families and converges
//! first order in the step size otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SkError};
use crate::geometry::{FaceSet, SPData};
use crate::numeric;
use crate::paths::PwLinearPath;
use crate::tol;

/// Options for the time-stepping solver.
#[derive(Debug, Clone)]
pub struct EsmOptions {
    /// Face-activity tolerance applied to solver output states.
    pub face_tol: f64,
}

impl Default for EsmOptions {
    fn default() -> Self {
        Self { face_tol: tol::SOLVER_ACTIVE_FACE }
    }
}

/// Solution bundle of the constrained path, the constraining term, the
/// active-set trace, and (when decomposed) the per-face local times.
#[derive(Debug, Clone)]
pub struct EspSolution {
    pub grid: Vec<f64>,
    pub z: PwLinearPath,
    pub y: PwLinearPath,
    /// Per-face nondecreasing local times; present once decomposed.
    pub l: Option<PwLinearPath>,
    /// Active face set at each grid time (producer-owned tolerance).
    pub active: Vec<FaceSet>,
    /// Per-interval face trace: union of the active sets at both endpoints.
    pub face_trace: Vec<FaceSet>,
}

impl EspSolution {
    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// View of the solution from grid time `S` onward, with times re-based.
    pub fn tail_view(&self, s_index: usize) -> EspSolution {
        let s = self.grid[s_index];
        let grid: Vec<f64> = self.grid[s_index..].iter().map(|t| t - s).collect();
        let z_vals = self.z_values()[s_index..].to_vec();
        let y_vals: Vec<DVector<f64>> = (s_index..self.grid.len())
            .map(|k| self.y.eval(self.grid[k]))
            .collect();
        EspSolution {
            z: PwLinearPath::new(grid.clone(), z_vals).unwrap(),
            y: PwLinearPath::new(grid.clone(), y_vals).unwrap(),
            l: None,
            active: self.active[s_index..].to_vec(),
            face_trace: self.face_trace[s_index..].to_vec(),
            grid,
        }
    }

    pub fn z_values(&self) -> &[DVector<f64>] {
        self.z.values()
    }
}

/// Runs the projection time-stepping scheme for `X` on `grid`. The grid must
/// contain every breakpoint of `X` inside the horizon.
pub fn solve_esm(
    sp: &SPData,
    x: &PwLinearPath,
    grid: &[f64],
    options: &EsmOptions,
) -> Result<EspSolution> {
    if grid.len() < 2 {
        return Err(SkError::InvalidInput("solver grid needs at least two times".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] != 0.0 {
        return Err(SkError::InvalidInput("solver grid must strictly increase from 0".into()));
    }
    let horizon = *grid.last().unwrap();
    for &bt in x.times() {
        if bt >= horizon {
            break;
        }
        let on_grid = grid
            .binary_search_by(|g| g.partial_cmp(&bt).unwrap())
            .map(|_| true)
            .unwrap_or_else(|pos| {
                (pos > 0 && (bt - grid[pos - 1]).abs() <= 1e-12)
                    || (pos < grid.len() && (grid[pos] - bt).abs() <= 1e-12)
            });
        if !on_grid {
            return Err(SkError::InvalidInput(format!(
                "grid must refine the input breakpoints (missing t = {})",
                bt
            )));
        }
    }

    let mut z_vals = Vec::with_capacity(grid.len());
    let mut active = Vec::with_capacity(grid.len());
    let mut z = sp.project_pi(&x.eval(grid[0]))?;
    active.push(sp.active_faces(&z, options.face_tol)?);
    z_vals.push(z.clone());
    let mut x_prev = x.eval(grid[0]);
    for &t in &grid[1..] {
        let x_now = x.eval(t);
        let w = &z + (&x_now - &x_prev);
        z = sp.project_pi(&w)?;
        active.push(sp.active_faces(&z, options.face_tol)?);
        z_vals.push(z.clone());
        x_prev = x_now;
    }
    let y_vals: Vec<DVector<f64>> = grid
        .iter()
        .zip(&z_vals)
        .map(|(&t, zv)| zv - x.eval(t))
        .collect();
    let face_trace = (0..grid.len() - 1)
        .map(|k| active[k].union(&active[k + 1]))
        .collect();
    Ok(EspSolution {
        grid: grid.to_vec(),
        z: PwLinearPath::new(grid.to_vec(), z_vals)?,
        y: PwLinearPath::new(grid.to_vec(), y_vals)?,
        l: None,
        active,
        face_trace,
    })
}

/// Expands each constraining-term increment over the directions active at
/// the arrival state and accumulates the nonnegative per-face local times.
/// Requires linear independence of the directions on every realized face
/// set; increments below `-1e-9` are decomposition failures, and small
/// negative noise is clipped to zero.
pub fn decompose_local_times(sp: &SPData, sol: &EspSolution) -> Result<PwLinearPath> {
    let n = sp.num_faces();
    let grid = &sol.grid;
    let mut l = vec![DVector::<f64>::zeros(n)];
    let mut cum = DVector::<f64>::zeros(n);
    for k in 0..grid.len() - 1 {
        let dy = sol.y.eval(grid[k + 1]) - sol.y.eval(grid[k]);
        let faces = &sol.active[k + 1];
        if faces.is_empty() {
            if dy.norm() > tol::DECOMPOSITION {
                return Err(SkError::Decomposition { step: k, residual: dy.norm() });
            }
            l.push(cum.clone());
            continue;
        }
        let dirs = DMatrix::from_fn(sp.dim(), faces.len(), |r, c| {
            sp.direction(faces.indices()[c])[r]
        });
        if numeric::rank(&dirs) < faces.len() {
            return Err(SkError::Assumption(format!(
                "directions of face set {} are linearly dependent; local times are undefined",
                faces
            )));
        }
        let coef = numeric::least_squares(&dirs, &dy);
        let residual = (&dirs * &coef - &dy).norm();
        if residual > tol::DECOMPOSITION {
            return Err(SkError::Decomposition { step: k, residual });
        }
        for (j, &c) in faces.indices().iter().zip(coef.iter()) {
            if c < -tol::LOCAL_TIME_CLIP {
                return Err(SkError::Decomposition { step: k, residual: -c });
            }
            cum[*j] += c.max(0.0);
        }
        l.push(cum.clone());
    }
    PwLinearPath::new(grid.clone(), l)
}

/// Empirical Lipschitz ratio of two solved inputs over `[0, T]`.
pub fn lipschitz_report(
    sp: &SPData,
    x1: &PwLinearPath,
    x2: &PwLinearPath,
    grid: &[f64],
    options: &EsmOptions,
) -> Result<f64> {
    let t = *grid.last().unwrap();
    let den = x1.sup_distance(x2, t);
    if den <= 0.0 {
        return Err(SkError::InvalidInput("inputs coincide; the ratio is undefined".into()));
    }
    let s1 = solve_esm(sp, x1, grid, options)?;
    let s2 = solve_esm(sp, x2, grid, options)?;
    Ok(s1.z.sup_distance(&s2.z, t) / den)
}

/// Ratio of orthogonally projected solution distances when both face traces
/// stay inside `faces`; `None` for the empty projection.
pub fn projected_lipschitz_check(
    sp: &SPData,
    x1: &PwLinearPath,
    x2: &PwLinearPath,
    faces: &FaceSet,
    grid: &[f64],
    options: &EsmOptions,
) -> Result<Option<f64>> {
    if faces.is_empty() {
        return Ok(None);
    }
    let s1 = solve_esm(sp, x1, grid, options)?;
    let s2 = solve_esm(sp, x2, grid, options)?;
    for trace in s1.face_trace.iter().chain(&s2.face_trace) {
        if !trace.is_subset_of(faces) {
            return Err(SkError::InvalidInput(format!(
                "face trace {} leaves the projection set {}",
                trace, faces
            )));
        }
    }
    let normals: Vec<DVector<f64>> = faces.iter().map(|i| sp.normal(i).clone()).collect();
    let basis = numeric::orthonormal_span(&normals, sp.dim());
    let project = |p: &PwLinearPath| -> PwLinearPath {
        let vals = p.times().iter().map(|&t| &basis * (basis.transpose() * p.eval(t))).collect();
        PwLinearPath::new(p.times().to_vec(), vals).unwrap()
    };
    let t = *grid.last().unwrap();
    let den = project(x1).sup_distance(&project(x2), t);
    if den <= 0.0 {
        return Ok(None);
    }
    Ok(Some(project(&s1.z).sup_distance(&project(&s2.z), t) / den))
}

/// Validates the solution identities at every grid time: `Z = X + Y`,
/// `Z in G`, local times nondecreasing and constant off their face trace,
/// and `Y = R L` when the decomposition is present. Returns the largest
/// residual observed.
pub fn solution_residual(sp: &SPData, x: &PwLinearPath, sol: &EspSolution) -> f64 {
    let mut worst = 0.0_f64;
    for (k, &t) in sol.grid.iter().enumerate() {
        let z = sol.z.eval(t);
        let y = sol.y.eval(t);
        worst = worst.max((&z - (x.eval(t) + &y)).norm());
        for i in 0..sp.num_faces() {
            worst = worst.max((-sp.slack(&z, i)).max(0.0));
        }
        if let Some(l) = &sol.l {
            let r = sp.reflection_matrix();
            worst = worst.max((&y - &r * l.eval(t)).norm());
            if k > 0 {
                let dl = l.eval(t) - l.eval(sol.grid[k - 1]);
                for i in 0..sp.num_faces() {
                    worst = worst.max(-dl[i]);
                    if !sol.face_trace[k - 1].contains(i) {
                        worst = worst.max(dl[i].abs());
                    }
                }
            }
        }
    }
    worst
}

/// Uniform grid `0, dt, 2 dt, ..., T` (the last point is forced onto `T`).
pub fn uniform_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let n = (horizon / dt).round() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    *g.last_mut().unwrap() = horizon;
    g
}
