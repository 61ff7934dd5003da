//! Reflected Brownian motion in the nonnegative quadrant and its pathwise
//! derivatives with respect to the initial condition, drift, dispersion and
//! reflection directions.
//!
//! Noise is produced by a counter-based generator keyed by
//! `(seed, step, component)` and mapped through the inverse normal CDF, so a
//! perturbed re-simulation consumes exactly the same Gaussian increments as
//! the base run and difference quotients are common-random-number exact.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dp::{solve_dp, theta_z, DpSolution};
use crate::error::{Result, SkError};
use crate::esm::{decompose_local_times, solve_esm, EsmOptions, EspSolution};
use crate::geometry::{PiFamily, SPData};
use crate::paths::{PwLinearPath, SampledPath};

/// Parameters of the quadrant RBM: start point, drift, dispersion and the
/// reflection matrix whose columns are the face directions (unit diagonal).
#[derive(Debug, Clone)]
pub struct RbmParams {
    pub x: Vector2<f64>,
    pub b: Vector2<f64>,
    pub sigma: Matrix2<f64>,
    pub reflection: Matrix2<f64>,
}

#[derive(Serialize, Deserialize)]
struct RbmParamsJson {
    x: [f64; 2],
    b: [f64; 2],
    sigma: [[f64; 2]; 2],
    reflection: [[f64; 2]; 2],
}

impl RbmParams {
    pub fn new(
        x: Vector2<f64>,
        b: Vector2<f64>,
        sigma: Matrix2<f64>,
        reflection: Matrix2<f64>,
    ) -> Result<Self> {
        if x[0] < 0.0 || x[1] < 0.0 {
            return Err(SkError::InvalidInput("start point must lie in the quadrant".into()));
        }
        let params = Self { x, b, sigma, reflection };
        let sp = params.sp_data()?;
        let (_, rho) = sp.q_matrix()?;
        if rho >= 1.0 {
            return Err(SkError::Assumption(format!(
                "coupling spectral radius {:.6} is not below one",
                rho
            )));
        }
        Ok(params)
    }

    /// Quadrant reflection data induced by the reflection matrix.
    pub fn sp_data(&self) -> Result<SPData> {
        SPData::new(
            vec![
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ],
            vec![0.0, 0.0],
            vec![
                DVector::from_vec(vec![self.reflection[(0, 0)], self.reflection[(1, 0)]]),
                DVector::from_vec(vec![self.reflection[(0, 1)], self.reflection[(1, 1)]]),
            ],
            PiFamily::Orthant,
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let dto: RbmParamsJson = serde_json::from_str(text)?;
        Self::new(
            Vector2::from(dto.x),
            Vector2::from(dto.b),
            Matrix2::from([[dto.sigma[0][0], dto.sigma[1][0]], [dto.sigma[0][1], dto.sigma[1][1]]]),
            Matrix2::from([
                [dto.reflection[0][0], dto.reflection[1][0]],
                [dto.reflection[0][1], dto.reflection[1][1]],
            ]),
        )
    }
}

/// Joint perturbation of initial condition, drift, dispersion and reflection
/// directions. The reflection perturbation has zeros on the diagonal so that
/// perturbed directions keep their normalization.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub y: Vector2<f64>,
    pub c: Vector2<f64>,
    pub theta: Matrix2<f64>,
    pub v: Matrix2<f64>,
}

#[derive(Serialize, Deserialize)]
struct PerturbationJson {
    y: [f64; 2],
    c: [f64; 2],
    theta: [[f64; 2]; 2],
    v: [[f64; 2]; 2],
}

impl Perturbation {
    pub fn new(
        y: Vector2<f64>,
        c: Vector2<f64>,
        theta: Matrix2<f64>,
        v: Matrix2<f64>,
    ) -> Result<Self> {
        if v[(0, 0)].abs() > 0.0 || v[(1, 1)].abs() > 0.0 {
            return Err(SkError::InvalidInput(
                "reflection perturbation must have a zero diagonal".into(),
            ));
        }
        Ok(Self { y, c, theta, v })
    }

    pub fn zero() -> Self {
        Self { y: Vector2::zeros(), c: Vector2::zeros(), theta: Matrix2::zeros(), v: Matrix2::zeros() }
    }

    /// Admissibility against a start point: faces already active at `x` must
    /// not be pushed outward by the initial-condition perturbation.
    pub fn admissible_at(&self, x: &Vector2<f64>) -> bool {
        (0..2).all(|i| x[i] > 0.0 || self.y[i] >= 0.0)
    }

    pub fn combine(alpha: f64, p1: &Perturbation, beta: f64, p2: &Perturbation) -> Perturbation {
        Perturbation {
            y: p1.y * alpha + p2.y * beta,
            c: p1.c * alpha + p2.c * beta,
            theta: p1.theta * alpha + p2.theta * beta,
            v: p1.v * alpha + p2.v * beta,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let dto: PerturbationJson = serde_json::from_str(text)?;
        Self::new(
            Vector2::from(dto.y),
            Vector2::from(dto.c),
            Matrix2::from([[dto.theta[0][0], dto.theta[1][0]], [dto.theta[0][1], dto.theta[1][1]]]),
            Matrix2::from([[dto.v[0][0], dto.v[1][0]], [dto.v[0][1], dto.v[1][1]]]),
        )
    }
}

/// One simulated sample path: the noise, the free path, the constrained
/// solution and the per-face local times, all on one grid.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub seed: u64,
    pub grid: Vec<f64>,
    pub params: RbmParams,
    pub sp: SPData,
    pub w: PwLinearPath,
    pub x: PwLinearPath,
    pub sol: EspSolution,
    pub local_times: PwLinearPath,
}

/// Derivative bundle: the regularized derivative samples plus the raw
/// recursion output (whose events drive comparison windows).
#[derive(Debug, Clone)]
pub struct PathwiseDerivative {
    pub theta: SampledPath,
    pub dp: DpSolution,
}

// SplitMix-style finalizer; two rounds decorrelate the key components.
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

fn prf(seed: u64, step: u64, component: u64) -> u64 {
    let x = seed
        ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(step.wrapping_add(1))
        ^ 0xD1B5_4A32_D192_ED03u64.wrapping_mul(component.wrapping_add(1));
    mix64(mix64(x))
}

/// Standard normal variate for `(seed, step, component)` via the inverse CDF
/// applied to one 53-bit uniform draw.
pub fn counter_normal(seed: u64, step: u64, component: u64) -> f64 {
    let bits = prf(seed, step, component) >> 11;
    let u = (bits as f64 + 0.5) * (1.0 / 9007199254740992.0); // 2^-53
    inverse_normal_cdf(u)
}

/// Inverse standard-normal CDF (Wichura's rational approximations; absolute
/// error below 1e-15 over the open unit interval).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_608;
        let den = ((((((5.226_495_278_852_545_6e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_6e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_3)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Simulates the constrained path on `grid` under `params` with the noise
/// stream of `seed`, and decomposes the per-face local times.
pub fn simulate_rbm(params: &RbmParams, grid: &[f64], seed: u64) -> Result<SamplePath> {
    let sp = params.sp_data()?;
    let (w, x) = free_paths(params, grid, seed);
    let sol = solve_esm(&sp, &x, grid, &EsmOptions::default())?;
    let local_times = decompose_local_times(&sp, &sol)?;
    Ok(SamplePath {
        seed,
        grid: grid.to_vec(),
        params: params.clone(),
        sp,
        w,
        x,
        sol,
        local_times,
    })
}

fn free_paths(params: &RbmParams, grid: &[f64], seed: u64) -> (PwLinearPath, PwLinearPath) {
    let mut w = Vector2::zeros();
    let mut w_vals = Vec::with_capacity(grid.len());
    let mut x_vals = Vec::with_capacity(grid.len());
    w_vals.push(DVector::from_vec(vec![0.0, 0.0]));
    x_vals.push(DVector::from_vec(vec![params.x[0], params.x[1]]));
    for k in 1..grid.len() {
        let dt = grid[k] - grid[k - 1];
        let root = dt.sqrt();
        w[0] += root * counter_normal(seed, (k - 1) as u64, 0);
        w[1] += root * counter_normal(seed, (k - 1) as u64, 1);
        let x = params.x + params.b * grid[k] + params.sigma * w;
        w_vals.push(DVector::from_vec(vec![w[0], w[1]]));
        x_vals.push(DVector::from_vec(vec![x[0], x[1]]));
    }
    (
        PwLinearPath::new(grid.to_vec(), w_vals).unwrap(),
        PwLinearPath::new(grid.to_vec(), x_vals).unwrap(),
    )
}

/// Perturbation path `psi(t) = y + c t + theta W_t + V L_t` sampled on the
/// grid of the simulated path.
pub fn perturbation_path(path: &SamplePath, pert: &Perturbation) -> PwLinearPath {
    let vals: Vec<DVector<f64>> = path
        .grid
        .iter()
        .map(|&t| {
            let w = path.w.eval(t);
            let l = path.local_times.eval(t);
            let w2 = Vector2::new(w[0], w[1]);
            let l2 = Vector2::new(l[0], l[1]);
            let v = pert.y + pert.c * t + pert.theta * w2 + pert.v * l2;
            DVector::from_vec(vec![v[0], v[1]])
        })
        .collect();
    PwLinearPath::new(path.grid.clone(), vals).unwrap()
}

/// Pathwise derivative of the constrained path under a joint perturbation:
/// solves the derivative problem for the induced perturbation path and
/// regularizes it, seeding time zero with the projection-map derivative.
pub fn pathwise_derivative(path: &SamplePath, pert: &Perturbation) -> Result<PathwiseDerivative> {
    if !pert.admissible_at(&path.params.x) {
        return Err(SkError::InvalidInput(
            "initial-condition perturbation leaves the quadrant at the start point".into(),
        ));
    }
    let psi = perturbation_path(path, pert);
    let dp = solve_dp(&path.sp, &path.sol, &psi)?;
    if dp.tau.is_some() {
        return Err(SkError::Assumption(
            "derivative recursion hit a degenerate face set on quadrant data".into(),
        ));
    }
    let x0 = DVector::from_vec(vec![path.params.x[0], path.params.x[1]]);
    let y0 = DVector::from_vec(vec![pert.y[0], pert.y[1]]);
    let d0 = path.sp.nabla_pi(&x0, &y0)?;
    let theta = theta_z(&path.sp, &path.sol, &dp, &d0);
    Ok(PathwiseDerivative { theta, dp })
}

/// Difference quotient `(Z^eps - Z) / eps` on the grid, re-simulating with
/// the same Gaussian increments under jointly perturbed parameters
/// (including the reflection directions, which alter the complementarity
/// solve itself).
pub fn fd_derivative(path: &SamplePath, pert: &Perturbation, eps: f64) -> Result<SampledPath> {
    if eps <= 0.0 {
        return Err(SkError::InvalidInput("difference-quotient step must be positive".into()));
    }
    let p = &path.params;
    let x_eps = p.x + pert.y * eps;
    if x_eps[0] < 0.0 || x_eps[1] < 0.0 {
        return Err(SkError::InvalidInput(format!(
            "step {} pushes the start point out of the quadrant",
            eps
        )));
    }
    let perturbed = RbmParams::new(
        x_eps,
        p.b + pert.c * eps,
        p.sigma + pert.theta * eps,
        p.reflection + pert.v * eps,
    )
    .map_err(|e| SkError::Assumption(format!("step {} too large: {}", eps, e)))?;
    let sp_eps = perturbed.sp_data()?;
    // Same noise: rebuild the free path from the stored Brownian increments.
    let x_vals: Vec<DVector<f64>> = path
        .grid
        .iter()
        .map(|&t| {
            let w = path.w.eval(t);
            let w2 = Vector2::new(w[0], w[1]);
            let x = perturbed.x + perturbed.b * t + perturbed.sigma * w2;
            DVector::from_vec(vec![x[0], x[1]])
        })
        .collect();
    let x_path = PwLinearPath::new(path.grid.clone(), x_vals).unwrap();
    let sol_eps = solve_esm(&sp_eps, &x_path, &path.grid, &EsmOptions::default())?;
    let values = path
        .grid
        .iter()
        .map(|&t| (sol_eps.z.eval(t) - path.sol.z.eval(t)) / eps)
        .collect();
    Ok(SampledPath { times: path.grid.clone(), values })
}

/// One row of the difference-quotient error table.
#[derive(Debug, Clone, Serialize)]
pub struct FdComparison {
    pub eps: f64,
    /// Largest deviation from the pathwise derivative over grid times more
    /// than `window` steps away from every recursion event.
    pub max_error: f64,
    pub compared_points: usize,
}

/// Compares difference quotients against the pathwise derivative outside
/// event windows: the derivative path jumps at boundary events and a finite
/// quotient straddles those jumps arbitrarily badly, so times within
/// `window` grid steps of a recorded event are excluded.
pub fn fd_error_table(
    path: &SamplePath,
    pert: &Perturbation,
    derivative: &PathwiseDerivative,
    epsilons: &[f64],
    window: usize,
) -> Result<Vec<FdComparison>> {
    let n = path.grid.len();
    let mut excluded = vec![false; n];
    for ev in &derivative.dp.events {
        if ev.moved <= 0.0 {
            continue;
        }
        if let Ok(k) | Err(k) = path
            .grid
            .binary_search_by(|t| t.partial_cmp(&ev.time).unwrap())
        {
            let lo = k.saturating_sub(window);
            let hi = (k + window).min(n - 1);
            for flag in excluded.iter_mut().take(hi + 1).skip(lo) {
                *flag = true;
            }
        }
    }
    let mut rows = Vec::new();
    for &eps in epsilons {
        let fd = fd_derivative(path, pert, eps)?;
        let mut worst = 0.0_f64;
        let mut count = 0usize;
        for k in 0..n {
            if excluded[k] {
                continue;
            }
            worst = worst.max((&fd.values[k] - &derivative.theta.values[k]).norm());
            count += 1;
        }
        rows.push(FdComparison { eps, max_error: worst, compared_points: count });
    }
    Ok(rows)
}

/// Grid-scale diagnostics for the boundary-visit structure of a path. These
/// are advisory: the underlying property is almost-sure and asymptotic, so
/// finite-resolution runs only report trends.
#[derive(Debug, Clone, Serialize)]
pub struct JitterReport {
    /// Grid times touching the boundary.
    pub boundary_touches: usize,
    /// Fraction of boundary touches whose constraining term is locally
    /// constant (violations of the active-pushing condition).
    pub constant_push_fraction: f64,
    /// Fraction of Lebesgue time spent with both faces active.
    pub two_face_time_fraction: f64,
    /// Corner visits examined for single-face precursors.
    pub corner_visits: usize,
    /// Fraction of (corner visit, shrinking window) pairs in which each face
    /// was visited alone inside the window.
    pub single_visit_fraction: f64,
}

pub fn jitter_diagnostics(path: &SamplePath, window_count: usize) -> JitterReport {
    let grid = &path.grid;
    let n = grid.len();
    let horizon = *grid.last().unwrap();
    let mut touches = 0usize;
    let mut constant_push = 0usize;
    let mut two_face_time = 0.0f64;
    for k in 0..n {
        let faces = &path.sol.active[k];
        if !faces.is_empty() {
            touches += 1;
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            let dy = (path.sol.y.eval(grid[hi]) - path.sol.y.eval(grid[lo])).norm();
            if dy <= 1e-14 {
                constant_push += 1;
            }
        }
        if faces.len() == 2 && k + 1 < n {
            two_face_time += grid[k + 1] - grid[k];
        }
    }
    let mut corner_visits = 0usize;
    let mut window_pairs = 0usize;
    let mut window_hits = 0usize;
    for k in 0..n {
        if path.sol.active[k].len() != 2 {
            continue;
        }
        corner_visits += 1;
        let t = grid[k];
        for j in 1..=window_count {
            let width = if t > 0.0 { t * 0.5_f64.powi(j as i32) } else { horizon * 0.5_f64.powi(j as i32) };
            let (lo, hi) = if t > 0.0 { (t - width, t) } else { (0.0, width) };
            window_pairs += 1;
            let mut saw = [false, false];
            for (m, &tm) in grid.iter().enumerate() {
                if tm <= lo {
                    continue;
                }
                if tm >= hi {
                    break;
                }
                let f = &path.sol.active[m];
                if f.len() == 1 {
                    saw[f.indices()[0]] = true;
                }
            }
            if saw[0] && saw[1] {
                window_hits += 1;
            }
        }
    }
    JitterReport {
        boundary_touches: touches,
        constant_push_fraction: if touches > 0 { constant_push as f64 / touches as f64 } else { 0.0 },
        two_face_time_fraction: two_face_time / horizon,
        corner_visits,
        single_visit_fraction: if window_pairs > 0 {
            window_hits as f64 / window_pairs as f64
        } else {
            0.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esm::uniform_grid;
    use crate::sm1d;
    use approx::assert_relative_eq;

    fn ghr_params(x: [f64; 2], b: [f64; 2], sigma: Matrix2<f64>) -> RbmParams {
        RbmParams::new(
            Vector2::from(x),
            Vector2::from(b),
            sigma,
            Matrix2::new(1.0, 0.5, -1.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn inverse_cdf_matches_known_quantiles() {
        assert_relative_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(inverse_normal_cdf(0.975), 1.959963984540054, epsilon = 1e-12);
        assert_relative_eq!(inverse_normal_cdf(0.025), -1.959963984540054, epsilon = 1e-12);
        assert_relative_eq!(inverse_normal_cdf(0.84134474606854293), 1.0, epsilon = 1e-10);
        assert_relative_eq!(inverse_normal_cdf(1e-10), -6.361340902404056, epsilon = 1e-9);
    }

    #[test]
    fn counter_stream_is_deterministic_and_unit_scale() {
        assert_eq!(counter_normal(7, 3, 1), counter_normal(7, 3, 1));
        assert_ne!(counter_normal(7, 3, 0), counter_normal(7, 3, 1));
        assert_ne!(counter_normal(7, 3, 0), counter_normal(8, 3, 0));
        let n = 40_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..n {
            let v = counter_normal(123, k as u64, 0);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {}", mean);
        assert!((var - 1.0).abs() < 0.03, "var {}", var);
    }

    #[test]
    fn deterministic_interior_drift_is_exact() {
        let params = ghr_params([1.0, 1.0], [1.0, 1.0], Matrix2::zeros());
        let grid = uniform_grid(1.0, 1.0 / 128.0);
        let path = simulate_rbm(&params, &grid, 5).unwrap();
        for &t in &grid {
            let z = path.sol.z.eval(t);
            assert_relative_eq!(z[0], 1.0 + t, epsilon = 1e-12);
            assert_relative_eq!(z[1], 1.0 + t, epsilon = 1e-12);
        }
        assert_relative_eq!(path.local_times.eval(1.0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn drift_into_face_matches_scalar_reduction() {
        // sigma = 0, b = (-1, 0): face 0 is hit at t = 1 and the normal
        // component behaves like the one-dimensional map of 1 - t.
        let params = ghr_params([1.0, 1.0], [-1.0, 0.0], Matrix2::zeros());
        let grid = uniform_grid(2.0, 1.0 / 256.0);
        let path = simulate_rbm(&params, &grid, 5).unwrap();
        let f = PwLinearPath::scalar(vec![0.0, 2.0], vec![1.0, -1.0]).unwrap();
        let (z1, _) = sm1d::gamma1(&f).unwrap();
        for &t in &grid {
            assert_relative_eq!(path.sol.z.eval(t)[0], z1.eval_scalar(t), epsilon = 1e-9);
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_path() {
        let params = ghr_params([0.3, 0.2], [-0.4, -0.3], Matrix2::new(0.4, 0.1, -0.05, 0.35));
        let grid = uniform_grid(1.0, 1.0 / 512.0);
        let a = simulate_rbm(&params, &grid, 99).unwrap();
        let b = simulate_rbm(&params, &grid, 99).unwrap();
        assert_eq!(a.sol.z.values(), b.sol.z.values());
        let c = simulate_rbm(&params, &grid, 100).unwrap();
        assert_ne!(a.sol.z.values(), c.sol.z.values());
    }

    #[test]
    fn interior_perturbation_passes_through() {
        let params = ghr_params([1.0, 1.0], [0.2, 0.3], Matrix2::new(0.1, 0.0, 0.0, 0.1));
        let grid = uniform_grid(0.5, 1.0 / 128.0);
        let path = simulate_rbm(&params, &grid, 3).unwrap();
        assert!(path.sol.active.iter().all(|f| f.is_empty()), "path should stay interior");
        let pert = Perturbation::new(
            Vector2::new(0.4, -0.2),
            Vector2::new(0.1, 0.6),
            Matrix2::new(0.2, -0.1, 0.05, 0.3),
            Matrix2::zeros(),
        )
        .unwrap();
        let d = pathwise_derivative(&path, &pert).unwrap();
        let psi = perturbation_path(&path, &pert);
        for (k, &t) in d.theta.times.iter().enumerate() {
            assert_relative_eq!(d.theta.values[k].clone(), psi.eval(t), epsilon = 1e-12);
        }
        // and the quotient is exact for every step size
        let fd = fd_derivative(&path, &pert, 1e-3).unwrap();
        for k in 0..fd.times.len() {
            assert_relative_eq!(fd.values[k].clone(), d.theta.values[k].clone(), epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_perturbation_gives_zero_derivative() {
        let params = ghr_params([0.2, 0.2], [-0.5, -0.4], Matrix2::new(0.3, 0.05, -0.04, 0.25));
        let grid = uniform_grid(1.0, 1.0 / 1024.0);
        let path = simulate_rbm(&params, &grid, 17).unwrap();
        let d = pathwise_derivative(&path, &Perturbation::zero()).unwrap();
        for v in &d.theta.values {
            assert_relative_eq!(v.norm(), 0.0, epsilon = 1e-12);
        }
        let fd = fd_derivative(&path, &Perturbation::zero(), 1e-2).unwrap();
        for v in &fd.values {
            assert_relative_eq!(v.norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pathwise_derivative_is_linear_in_the_perturbation() {
        let params = ghr_params([0.2, 0.3], [-0.6, -0.5], Matrix2::new(0.35, 0.1, -0.02, 0.3));
        let grid = uniform_grid(1.0, 1.0 / 2048.0);
        let path = simulate_rbm(&params, &grid, 23).unwrap();
        let p1 = Perturbation::new(
            Vector2::new(0.3, 0.1),
            Vector2::new(-0.2, 0.4),
            Matrix2::new(0.1, 0.0, 0.2, -0.1),
            Matrix2::new(0.0, -0.3, 0.25, 0.0),
        )
        .unwrap();
        let p2 = Perturbation::new(
            Vector2::new(0.05, 0.2),
            Vector2::new(0.3, -0.1),
            Matrix2::new(-0.05, 0.15, 0.0, 0.2),
            Matrix2::new(0.0, 0.2, -0.1, 0.0),
        )
        .unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let combo = Perturbation::combine(alpha, &p1, beta, &p2);
        let d1 = pathwise_derivative(&path, &p1).unwrap();
        let d2 = pathwise_derivative(&path, &p2).unwrap();
        let dc = pathwise_derivative(&path, &combo).unwrap();
        for k in 0..path.grid.len() {
            let expected = &d1.dp.phi.values()[k] * alpha + &d2.dp.phi.values()[k] * beta;
            assert!((&dc.dp.phi.values()[k] - expected).norm() <= 1e-9);
        }
    }

    #[test]
    fn sigma_zero_face_fixture_matches_scalar_derivative_formula() {
        // Deterministic drift into face 0; perturb the drift only. The
        // derivative follows psi plus the scalar functional along d_0.
        let params = ghr_params([1.0, 1.0], [-1.0, 0.0], Matrix2::zeros());
        let grid = uniform_grid(1.5, 1.5 / 512.0);
        let path = simulate_rbm(&params, &grid, 1).unwrap();
        let pert = Perturbation::new(
            Vector2::new(0.0, 0.0),
            Vector2::new(0.5, 0.0),
            Matrix2::zeros(),
            Matrix2::zeros(),
        )
        .unwrap();
        let d = pathwise_derivative(&path, &pert).unwrap();
        let f = PwLinearPath::scalar(vec![0.0, 1.5], vec![1.0, -0.5]).unwrap();
        let g = PwLinearPath::scalar(vec![0.0, 1.5], vec![0.0, 0.75]).unwrap();
        let d0 = DVector::from_vec(vec![
            path.params.reflection[(0, 0)],
            path.params.reflection[(1, 0)],
        ]);
        for (k, &t) in d.theta.times.iter().enumerate() {
            if (t - 1.0).abs() < 3.0 / 512.0 {
                continue; // the reflection onset is the jump time
            }
            let scalar = sm1d::nabla_gamma1_right(&f, &g, t).unwrap();
            let psi_t = DVector::from_vec(vec![0.5 * t, 0.0]);
            let expected = &psi_t + &d0 * (scalar - 0.5 * t);
            assert!(
                (&d.dp.phi.values()[k] - &expected).norm() <= 1e-9,
                "t = {}: got {:?} expected {:?}",
                t,
                d.dp.phi.values()[k],
                expected
            );
        }
    }

    #[test]
    fn common_random_numbers_are_bit_identical() {
        let params = ghr_params([0.2, 0.2], [-0.4, -0.3], Matrix2::new(0.4, 0.1, -0.05, 0.35));
        let grid = uniform_grid(0.5, 1.0 / 512.0);
        let path = simulate_rbm(&params, &grid, 4242).unwrap();
        let pert = Perturbation::new(
            Vector2::new(0.1, 0.2),
            Vector2::new(0.3, -0.2),
            Matrix2::new(0.1, 0.05, -0.02, 0.08),
            Matrix2::new(0.0, 0.1, -0.1, 0.0),
        )
        .unwrap();
        let a = fd_derivative(&path, &pert, 1e-3).unwrap();
        let b = fd_derivative(&path, &pert, 1e-3).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn jitter_report_flags_deterministic_sliding() {
        // sigma = 0 drift along face 0 after hitting it: pushing is constant
        // once the path slides, which the condition-1 proxy must flag.
        let params = ghr_params([0.5, 1.0], [-1.0, 0.0], Matrix2::zeros());
        let grid = uniform_grid(2.0, 1.0 / 256.0);
        let path = simulate_rbm(&params, &grid, 2).unwrap();
        let report = jitter_diagnostics(&path, 3);
        assert!(report.boundary_touches > 0);
        assert_eq!(report.two_face_time_fraction, 0.0);

        let interior = ghr_params([1.0, 1.0], [1.0, 1.0], Matrix2::zeros());
        let ipath = simulate_rbm(&interior, &grid, 2).unwrap();
        let ireport = jitter_diagnostics(&ipath, 3);
        assert_eq!(ireport.boundary_touches, 0);
        assert_eq!(ireport.constant_push_fraction, 0.0);
    }
}
