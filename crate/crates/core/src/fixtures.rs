//! Named example configurations used across the test suites and the CLI:
//!
//! * `ghr_example_*`: a generalized Harrison-Reiman quadrant SP with oblique
//!   directions `d_1 = (1,-1)'`, `d_2 = (1/2, 1)'` and a compatible
//!   parallelogram polytope.
//! * `quadrant_normal_*`: the normally reflected quadrant with the unit
//!   square polytope.
//! * `w_corner_*`: the quadrant SP with both directions equal to `(1,1)'`.
//!   Its corner is a W-point (the active hyperplanes plus the direction span
//!   do not fill the plane), the derivative recursion must stop there, and a
//!   zigzag input with dyadic breakpoints drives the constrained path into
//!   that corner at time one. All arithmetic along the zigzag is exact in
//!   binary floating point, so solver comparisons use tolerance zero.
//! * `v_cone_*`: a three-dimensional, four-face configuration whose
//!   direction cone at the origin contains a line, with its box polytope and
//!   closed-form projection.

use nalgebra::{DVector, Vector2};

use crate::derivproj::BPolytope;
use crate::error::{Result, SkError};
use crate::esm::{solve_esm, EsmOptions};
use crate::geometry::{quadrant_sp, CustomPi, PiFamily, SPData};
use crate::paths::PwLinearPath;

use std::sync::Arc;

/// Ratio of the zigzag breakpoint spacing (`t_n = 1 - gamma^n`).
pub const W_CORNER_GAMMA: f64 = 0.5;

/// Largest subsequence index with exact dyadic arithmetic in doubles.
pub const W_CORNER_MAX_K: usize = 20;

/// Oblique quadrant example data.
pub fn ghr_example_sp() -> SPData {
    quadrant_sp([1.0, -1.0], [0.5, 1.0]).expect("example data is valid")
}

/// Parallelogram `{ |x1 + x2| <= 6, |2 x1 - x2| <= 9 }`, compatible with the
/// oblique example directions at margin one.
pub fn ghr_example_b() -> BPolytope {
    BPolytope::new(vec![
        DVector::from_vec(vec![5.0, 1.0]),
        DVector::from_vec(vec![-1.0, 7.0]),
        DVector::from_vec(vec![-5.0, -1.0]),
        DVector::from_vec(vec![1.0, -7.0]),
    ])
    .expect("parallelogram is a valid polytope")
}

/// Normally reflected quadrant.
pub fn quadrant_normal_sp() -> SPData {
    quadrant_sp([1.0, 0.0], [0.0, 1.0]).expect("normal data is valid")
}

/// Unit square, compatible with normal reflection at margin one.
pub fn quadrant_normal_b() -> BPolytope {
    BPolytope::new(vec![
        DVector::from_vec(vec![1.0, 1.0]),
        DVector::from_vec(vec![1.0, -1.0]),
        DVector::from_vec(vec![-1.0, 1.0]),
        DVector::from_vec(vec![-1.0, -1.0]),
    ])
    .expect("square is a valid polytope")
}

/// Closed-form projection of the equal-directions quadrant data: push along
/// `(1,1)'` by the largest coordinate violation.
pub fn w_corner_pi() -> CustomPi {
    CustomPi {
        name: "w-corner".into(),
        project: |x| {
            let a = (-x[0]).max(-x[1]).max(0.0);
            DVector::from_vec(vec![x[0] + a, x[1] + a])
        },
    }
}

/// Quadrant SP with `d_1 = d_2 = (1,1)'` and its closed-form projection.
pub fn w_corner_sp() -> SPData {
    SPData::new(
        vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])],
        vec![0.0, 0.0],
        vec![DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![1.0, 1.0])],
        PiFamily::Custom(Arc::new(w_corner_pi())),
    )
    .expect("equal-directions data is valid")
}

/// Parallelogram `{ |x1 - x2| <= 1, |x1 + x2| <= 3 }` compatible with the
/// equal-directions data at margin one.
pub fn w_corner_b() -> BPolytope {
    BPolytope::new(vec![
        DVector::from_vec(vec![2.0, 1.0]),
        DVector::from_vec(vec![1.0, 2.0]),
        DVector::from_vec(vec![-2.0, -1.0]),
        DVector::from_vec(vec![-1.0, -2.0]),
    ])
    .expect("parallelogram is a valid polytope")
}

/// The zigzag input: starting from `(1, 0)`, alternate decrements
/// `3 gamma^{2n+1}` in the first coordinate and `3 gamma^{2n+2}` in the
/// second at the dyadic times `t_n = 1 - gamma^n`, closing continuously at
/// `(-1,-1)` from time one on. `depth` is the last breakpoint index.
pub fn w_corner_input(depth: usize) -> PwLinearPath {
    assert!(depth >= 2 && depth <= 48, "depth must keep the times exactly representable");
    let gamma = W_CORNER_GAMMA;
    let mut times = Vec::with_capacity(depth + 2);
    let mut values = Vec::with_capacity(depth + 2);
    let mut x = Vector2::new(1.0, 0.0);
    times.push(0.0);
    values.push(DVector::from_vec(vec![x[0], x[1]]));
    for m in 1..=depth {
        let step = 3.0 * gamma.powi(m as i32);
        if m % 2 == 1 {
            x[0] -= step;
        } else {
            x[1] -= step;
        }
        times.push(1.0 - gamma.powi(m as i32));
        values.push(DVector::from_vec(vec![x[0], x[1]]));
    }
    times.push(1.0);
    values.push(DVector::from_vec(vec![-1.0, -1.0]));
    PwLinearPath::new(times, values).expect("zigzag breakpoints are increasing")
}

/// Direct closed-form recursion for the constrained zigzag path: applies the
/// projection formula breakpoint by breakpoint. Used as the independent
/// cross-check of the generic solver on this input.
pub fn w_corner_recursion(input: &PwLinearPath, eps: f64) -> Vec<Vector2<f64>> {
    let project = |x: Vector2<f64>| -> Vector2<f64> {
        let a = (-x[0]).max(-x[1]).max(0.0);
        Vector2::new(x[0] + a, x[1] + a)
    };
    let times = input.times();
    let values = input.values();
    let mut out = Vec::with_capacity(times.len());
    let mut z = project(Vector2::new(values[0][0] + eps, values[0][1]));
    out.push(z);
    for k in 1..times.len() {
        let dx = Vector2::new(values[k][0] - values[k - 1][0], values[k][1] - values[k - 1][1]);
        z = project(z + dx);
        out.push(z);
    }
    out
}

/// One difference quotient of the zigzag fixture.
#[derive(Debug, Clone)]
pub struct SubsequenceRun {
    pub k: usize,
    pub eps: f64,
    /// `(Z_eps(1) - Z(1)) / eps`.
    pub quotient: Vector2<f64>,
}

/// The two difference-quotient tables along the step-size subsequences
/// `eps_k = gamma^{2k}` and `eps'_k = gamma^{2k+1}`.
#[derive(Debug, Clone)]
pub struct SubsequenceTables {
    pub even: Vec<SubsequenceRun>,
    pub odd: Vec<SubsequenceRun>,
}

/// Runs the generic solver on the zigzag fixture for both step-size
/// subsequences up to `k_max`, cross-checking every state against the
/// closed-form recursion (any disagreement beyond `1e-12` signals a solver
/// bug). All quantities are dyadic, so the quotients are exact.
pub fn run_w_corner_subsequences(k_max: usize) -> Result<SubsequenceTables> {
    if k_max == 0 || k_max > W_CORNER_MAX_K {
        return Err(SkError::InvalidInput(format!(
            "subsequence depth must lie in 1..={}",
            W_CORNER_MAX_K
        )));
    }
    let sp = w_corner_sp();
    let gamma = W_CORNER_GAMMA;
    let depth = (2 * k_max + 6).min(48);
    let input = w_corner_input(depth);
    let grid = input.times().to_vec();
    let options = EsmOptions { face_tol: 0.0 };

    let solve_with = |eps: f64| -> Result<Vec<Vector2<f64>>> {
        let shifted = if eps == 0.0 {
            input.clone()
        } else {
            let values = input
                .values()
                .iter()
                .map(|v| DVector::from_vec(vec![v[0] + eps, v[1]]))
                .collect();
            PwLinearPath::new(grid.clone(), values)?
        };
        let sol = solve_esm(&sp, &shifted, &grid, &options)?;
        let reference = w_corner_recursion(&input, eps);
        for (k, z) in sol.z_values().iter().enumerate() {
            let gap = (Vector2::new(z[0], z[1]) - reference[k]).norm();
            if gap > 1e-12 {
                return Err(SkError::Numerical(format!(
                    "solver and closed-form recursion disagree at t = {} by {:.3e}",
                    grid[k], gap
                )));
            }
        }
        Ok(reference)
    };

    let base = solve_with(0.0)?;
    let z1 = *base.last().unwrap();
    if z1.norm() != 0.0 {
        return Err(SkError::Numerical(format!(
            "constrained zigzag must vanish at time one (got {:?})",
            z1
        )));
    }

    let mut tables = SubsequenceTables { even: Vec::new(), odd: Vec::new() };
    for k in 1..=k_max {
        let eps_even = gamma.powi(2 * k as i32);
        let even = solve_with(eps_even)?;
        tables.even.push(SubsequenceRun {
            k,
            eps: eps_even,
            quotient: (even.last().unwrap() - z1) / eps_even,
        });
        let eps_odd = gamma.powi(2 * k as i32 + 1);
        let odd = solve_with(eps_odd)?;
        tables.odd.push(SubsequenceRun {
            k,
            eps: eps_odd,
            quotient: (odd.last().unwrap() - z1) / eps_odd,
        });
    }
    Ok(tables)
}

/// Closed-form projection of the three-dimensional cone example: clip the
/// first two coordinates at zero and cap the third by their sum.
pub fn v_cone_pi() -> CustomPi {
    CustomPi {
        name: "v-cone".into(),
        project: |x| {
            let a1 = x[0].max(0.0);
            let a2 = x[1].max(0.0);
            let a3 = x[2].max(0.0);
            DVector::from_vec(vec![a1, a2, (a1 + a2).min(a3)])
        },
    }
}

/// Three-dimensional, four-face configuration whose direction cone at the
/// origin contains the vertical line: `d_i = n_i = e_i` for the first three
/// faces and `d_4 = -sqrt(3) e_3` against the tilted normal
/// `(e_1 + e_2 - e_3)/sqrt(3)`.
pub fn v_cone_sp() -> SPData {
    let s3 = 3.0_f64.sqrt();
    SPData::new(
        vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0 / s3, 1.0 / s3, -1.0 / s3]),
        ],
        vec![0.0, 0.0, 0.0, 0.0],
        vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, -s3]),
        ],
        PiFamily::Custom(Arc::new(v_cone_pi())),
    )
    .expect("cone example data is valid")
}

/// Box `[-1,1] x [-1,1] x [-4,4]`, compatible with the cone example at
/// margin one.
pub fn v_cone_b() -> BPolytope {
    let mut vertices = Vec::new();
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-4.0, 4.0] {
                vertices.push(DVector::from_vec(vec![sx, sy, sz]));
            }
        }
    }
    BPolytope::new(vertices).expect("box is a valid polytope")
}
