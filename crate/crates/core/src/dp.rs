//! Discrete solver for the derivative problem attached to a constrained
//! path: at each grid time the running derivative is obliquely projected
//! onto the hyperplane intersection of the faces active there, along the
//! span of their reflection directions. Includes the left-limit
//! regularization rule and the linearity/time-shift/Lipschitz checks.
//!
//! The solver never re-detects faces from path values; the active sets come
//! from the producer of the constrained path, which owns the detection
//! tolerance. Solving stops at the first grid time whose face set is
//! degenerate (W-set); the partial solution carries that stopping time.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::derivproj::build_projection;
use crate::error::{Result, SkError};
use crate::esm::EspSolution;
use crate::geometry::{FaceSet, SPData};
use crate::numeric;
use crate::paths::{CadlagStepPath, PwLinearPath, SampledPath};
use crate::tol;

/// One recorded projection event.
#[derive(Debug, Clone)]
pub struct DpEvent {
    pub time: f64,
    pub faces: FaceSet,
    /// Norm of the change the projection applied at this time.
    pub moved: f64,
}

/// Solution of the discrete derivative problem.
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub grid: Vec<f64>,
    pub phi: CadlagStepPath,
    pub eta: CadlagStepPath,
    pub events: Vec<DpEvent>,
    /// First grid time whose face set is degenerate, when one was hit.
    pub tau: Option<f64>,
}

impl DpSolution {
    pub fn phi_at(&self, k: usize) -> &DVector<f64> {
        &self.phi.values()[k]
    }
}

/// Runs the projection recursion along the constrained path's active sets:
/// `phi_0` is the projection of `psi(0)` at the initial face set and
/// `phi_k = L_k (phi_{k-1} + psi(t_k) - psi(t_{k-1}))`. The perturbation is
/// sampled on the producer grid.
pub fn solve_dp(sp: &SPData, sol: &EspSolution, psi: &PwLinearPath) -> Result<DpSolution> {
    let grid = &sol.grid;
    let dim = sp.dim();
    if psi.dim() != dim {
        return Err(SkError::InvalidInput("perturbation dimension mismatch".into()));
    }
    let mut proj_cache: HashMap<FaceSet, Option<DMatrix<f64>>> = HashMap::new();
    let mut projection = |faces: &FaceSet| -> Option<DMatrix<f64>> {
        proj_cache
            .entry(faces.clone())
            .or_insert_with(|| build_projection(sp, faces).ok().map(|p| p.matrix().clone()))
            .clone()
    };

    let mut times = Vec::with_capacity(grid.len());
    let mut phis: Vec<DVector<f64>> = Vec::with_capacity(grid.len());
    let mut lefts: Vec<DVector<f64>> = Vec::with_capacity(grid.len());
    let mut events = Vec::new();
    let mut tau = None;

    let psi0 = psi.eval(grid[0]);
    match projection(&sol.active[0]) {
        Some(p0) => {
            let phi0 = &p0 * &psi0;
            times.push(grid[0]);
            lefts.push(phi0.clone());
            if !sol.active[0].is_empty() {
                events.push(DpEvent {
                    time: grid[0],
                    faces: sol.active[0].clone(),
                    moved: (&phi0 - &psi0).norm(),
                });
            }
            phis.push(phi0);
        }
        None => {
            tau = Some(grid[0]);
        }
    }

    if tau.is_none() {
        let mut psi_prev = psi0;
        for k in 1..grid.len() {
            let psi_now = psi.eval(grid[k]);
            let drifted = &phis[k - 1] + (&psi_now - &psi_prev);
            let faces = &sol.active[k];
            let phi_k = if faces.is_empty() {
                drifted.clone()
            } else {
                match projection(faces) {
                    Some(p) => &p * &drifted,
                    None => {
                        tau = Some(grid[k]);
                        break;
                    }
                }
            };
            let moved = (&phi_k - &drifted).norm();
            if moved > 0.0 || (k > 0 && faces != &sol.active[k - 1]) {
                events.push(DpEvent { time: grid[k], faces: faces.clone(), moved });
            }
            times.push(grid[k]);
            lefts.push(drifted);
            phis.push(phi_k);
            psi_prev = psi_now;
        }
    }

    if phis.is_empty() {
        return Err(SkError::Assumption(format!(
            "derivative problem is degenerate at the initial time: face set {} spans too little",
            sol.active[0]
        )));
    }
    let eta_vals: Vec<DVector<f64>> = times
        .iter()
        .zip(&phis)
        .map(|(&t, p)| p - psi.eval(t))
        .collect();
    let eta_lefts: Vec<DVector<f64>> = times
        .iter()
        .zip(&lefts)
        .map(|(&t, p)| p - psi.eval(t))
        .collect();
    Ok(DpSolution {
        phi: CadlagStepPath::new(times.clone(), phis, lefts)?,
        eta: CadlagStepPath::new(times.clone(), eta_vals, eta_lefts)?,
        grid: times,
        events,
        tau,
    })
}

/// Left-limit substitution: the regularized derivative takes the stored left
/// limit at smooth-boundary times where that limit still satisfies the local
/// half-space constraint, and the initial value is replaced by the supplied
/// projection-map derivative.
pub fn theta_z(
    sp: &SPData,
    sol: &EspSolution,
    dp: &DpSolution,
    deriv_at_0: &DVector<f64>,
) -> SampledPath {
    let mut values = Vec::with_capacity(dp.grid.len());
    for (k, _t) in dp.grid.iter().enumerate() {
        if k == 0 {
            values.push(deriv_at_0.clone());
            continue;
        }
        let faces = &sol.active[k];
        if faces.len() == 1 {
            let i = faces.indices()[0];
            let left = dp.phi.left_value(k);
            if left.dot(sp.normal(i)) >= -tol::LEFT_LIMIT_MEMBERSHIP {
                values.push(left.clone());
            } else {
                values.push(dp.phi.values()[k].clone());
            }
        } else {
            values.push(dp.phi.values()[k].clone());
        }
    }
    SampledPath { times: dp.grid.clone(), values }
}

/// Re-solves with the combined perturbation and reports the worst deviation
/// from the matching combination of the two given solutions.
pub fn dp_linearity_check(
    sp: &SPData,
    sol: &EspSolution,
    psi1: &PwLinearPath,
    psi2: &PwLinearPath,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let d1 = solve_dp(sp, sol, psi1)?;
    let d2 = solve_dp(sp, sol, psi2)?;
    let combo = psi1.linear_combo(alpha, psi2, beta);
    let dc = solve_dp(sp, sol, &combo)?;
    let mut worst = 0.0_f64;
    for k in 0..dc.grid.len() {
        let expected = &d1.phi.values()[k] * alpha + &d2.phi.values()[k] * beta;
        worst = worst.max((&dc.phi.values()[k] - expected).norm());
    }
    Ok(worst)
}

/// Restarts the recursion at grid time index `s_index` with the shifted
/// perturbation anchored at the running derivative and reports the worst
/// deviation from the original solution on the tail.
pub fn dp_timeshift_check(
    sp: &SPData,
    sol: &EspSolution,
    psi: &PwLinearPath,
    s_index: usize,
) -> Result<f64> {
    let full = solve_dp(sp, sol, psi)?;
    if s_index >= full.grid.len() {
        return Err(SkError::InvalidInput("shift index beyond the solved range".into()));
    }
    let s = full.grid[s_index];
    let tail_sol = sol.tail_view(s_index);
    let psi_shifted = psi.time_shift(s, &full.phi.values()[s_index]);
    let tail = solve_dp(sp, &tail_sol, &psi_shifted)?;
    let mut worst = 0.0_f64;
    for (k, &tt) in tail.grid.iter().enumerate() {
        worst = worst.max((&tail.phi.values()[k] - &full.phi.values()[s_index + k]).norm());
        let _ = tt;
    }
    Ok(worst)
}

/// Empirical Lipschitz ratio of the derivative map between two
/// perturbations.
pub fn dp_lipschitz_report(
    sp: &SPData,
    sol: &EspSolution,
    psi1: &PwLinearPath,
    psi2: &PwLinearPath,
) -> Result<f64> {
    let horizon = sol.horizon();
    let den = psi1.sup_distance(psi2, horizon);
    if den <= 0.0 {
        return Err(SkError::InvalidInput("perturbations coincide; ratio undefined".into()));
    }
    let d1 = solve_dp(sp, sol, psi1)?;
    let d2 = solve_dp(sp, sol, psi2)?;
    Ok(d1.phi.sup_distance(&d2.phi, horizon) / den)
}

/// Worst residual of the structural solution identities: the additive
/// identity, membership of the running derivative in the active hyperplanes,
/// span membership of constraining increments and jumps, and constancy on
/// interior stretches.
pub fn dp_solution_residual(sp: &SPData, sol: &EspSolution, psi: &PwLinearPath, dp: &DpSolution) -> f64 {
    let mut worst = 0.0_f64;
    for (k, &t) in dp.grid.iter().enumerate() {
        let phi = &dp.phi.values()[k];
        let eta = &dp.eta.values()[k];
        worst = worst.max((phi - (psi.eval(t) + eta)).norm());
        for i in sol.active[k].iter() {
            worst = worst.max(phi.dot(sp.normal(i)).abs());
        }
        if k > 0 {
            // eta increment over the interval lies in the span of the
            // directions active during it.
            let de = eta - &dp.eta.values()[k - 1];
            let trace = &sol.face_trace[k - 1];
            worst = worst.max(span_residual(sp, trace, &de));
            // jump inclusion at the event time
            let jump = eta - dp.eta.left_value(k);
            worst = worst.max(span_residual(sp, &sol.active[k], &jump));
            if trace.is_empty() {
                worst = worst.max(de.norm());
            }
        }
    }
    worst
}

fn span_residual(sp: &SPData, faces: &FaceSet, v: &DVector<f64>) -> f64 {
    if faces.is_empty() {
        return v.norm();
    }
    let dirs = DMatrix::from_fn(sp.dim(), faces.len(), |r, c| sp.direction(faces.indices()[c])[r]);
    let coef = numeric::least_squares(&dirs, v);
    (&dirs * coef - v).norm()
}
