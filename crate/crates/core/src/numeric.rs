//! Small dense linear-algebra helpers shared by the geometry and solver
//! modules. Problem sizes here are tiny (dimension <= 4, face counts <= 12),
//! so exhaustive subset enumeration is used instead of iterative LP/NNLS
//! machinery.

use nalgebra::{DMatrix, DVector};

use crate::tol;

/// Orthonormal basis of the subspace orthogonal to every row in `rows`.
/// An empty row set yields the identity basis of R^dim.
pub fn orthonormal_complement(rows: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::identity(dim, dim);
    }
    let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = (tol::RANK * tol::RANK) * max_ev.max(1.0);
    let mut cols = Vec::new();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev <= cut {
            cols.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Orthonormal basis of the span of `vectors` (possibly empty -> 0 columns).
pub fn orthonormal_span(vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    let a = DMatrix::from_fn(dim, vectors.len(), |i, j| vectors[j][i]);
    let gram = &a * a.transpose();
    let eig = gram.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = (tol::RANK * tol::RANK) * max_ev.max(1.0);
    let mut cols = Vec::new();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cut {
            cols.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Numerical rank with a relative threshold.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    m.clone().svd(false, false).rank(tol::RANK)
}

/// Minimum-norm least-squares solve of `a x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, tol::RANK * 1e-3).expect("svd solve")
}

/// Nonnegative least squares by active-set enumeration: minimizes
/// `|a x - b|` subject to `x >= 0`. Exact for small column counts since the
/// optimal active set is among the enumerated subsets.
///
/// Returns `(x, residual_norm)`.
pub fn nonneg_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let m = a.ncols();
    assert!(m <= 16, "nonneg_least_squares supports at most 16 columns");
    let mut best_x = DVector::zeros(m);
    let mut best_res = b.norm();
    for mask in 1u32..(1 << m) {
        let cols: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])]);
        let coef = least_squares(&sub, b);
        if coef.iter().any(|&c| c < -1e-12) {
            continue;
        }
        let res = (&sub * &coef - b).norm();
        if res < best_res {
            let mut x = DVector::zeros(m);
            for (j, &c) in cols.iter().zip(coef.iter()) {
                x[*j] = c.max(0.0);
            }
            best_x = x;
            best_res = res;
        }
    }
    (best_x, best_res)
}

/// Whether the convex cone generated by `directions` contains a line, i.e.
/// some nontrivial nonnegative combination of the generators vanishes.
pub fn cone_contains_line(directions: &[DVector<f64>]) -> bool {
    let m = directions.len();
    if m < 2 {
        return false;
    }
    let dim = directions[0].len();
    // Solve D lambda = 0, sum lambda = 1, lambda >= 0 over column subsets.
    for mask in 1u32..(1 << m) {
        let cols: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if cols.len() < 2 {
            continue;
        }
        let mut a = DMatrix::zeros(dim + 1, cols.len());
        for (j, &c) in cols.iter().enumerate() {
            for i in 0..dim {
                a[(i, j)] = directions[c][i];
            }
            a[(dim, j)] = 1.0;
        }
        let mut b = DVector::zeros(dim + 1);
        b[dim] = 1.0;
        let lambda = least_squares(&a, &b);
        let res = (&a * &lambda - &b).norm();
        if res <= 1e-9 && lambda.iter().all(|&l| l >= -1e-9) {
            return true;
        }
    }
    false
}

/// Outcome of the strict-feasibility solve for a face subset.
pub struct StrictWitness {
    pub point: DVector<f64>,
    /// Minimum slack over the constraints required to be strict.
    pub min_slack: f64,
}

/// Searches for a point satisfying `<x, n_i> = c_i` for `i` in `equalities`
/// and `<x, n_j> > c_j` for every other face, by maximizing the minimum
/// strict slack over a bounded box via exhaustive vertex enumeration of the
/// epigraph LP. Returns `None` when the equality system itself is
/// inconsistent; otherwise the best witness found (whose `min_slack` decides
/// feasibility).
pub fn strict_feasibility(
    normals: &[DVector<f64>],
    offsets: &[f64],
    equalities: &[usize],
    box_half_width: f64,
) -> Option<StrictWitness> {
    let dim = normals[0].len();
    let n = normals.len();
    let eq_set: Vec<usize> = equalities.to_vec();

    let (x0, basis) = if eq_set.is_empty() {
        (DVector::zeros(dim), DMatrix::identity(dim, dim))
    } else {
        let a = DMatrix::from_fn(eq_set.len(), dim, |i, j| normals[eq_set[i]][j]);
        let b = DVector::from_fn(eq_set.len(), |i, _| offsets[eq_set[i]]);
        let x0 = least_squares(&a, &b);
        if (&a * &x0 - &b).norm() > 1e-9 {
            return None;
        }
        let rows: Vec<DVector<f64>> = eq_set.iter().map(|&i| normals[i].clone()).collect();
        let basis = orthonormal_complement(&rows, dim);
        (x0, basis)
    };
    let d = basis.ncols();

    let ineq: Vec<usize> = (0..n).filter(|i| !eq_set.contains(i)).collect();
    if d == 0 {
        let min_slack = ineq
            .iter()
            .map(|&j| normals[j].dot(&x0) - offsets[j])
            .fold(f64::INFINITY, f64::min);
        return Some(StrictWitness { point: x0, min_slack });
    }

    // LP in (t, s): maximize s subject to
    //   <V' n_j, t> - s >= c_j - <x0, n_j>   for j not in eq,
    //   t_i >= -M, -t_i >= -M, -s >= -M.
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new(); // (g, rhs) with g.(t,s) >= rhs
    for &j in &ineq {
        let mut g = DVector::zeros(d + 1);
        for i in 0..d {
            g[i] = basis.column(i).dot(&normals[j]);
        }
        g[d] = -1.0;
        rows.push((g, offsets[j] - normals[j].dot(&x0)));
    }
    let m_box = box_half_width;
    for i in 0..d {
        let mut g = DVector::zeros(d + 1);
        g[i] = 1.0;
        rows.push((g.clone(), -m_box));
        g[i] = -1.0;
        rows.push((g, -m_box));
    }
    let mut g = DVector::zeros(d + 1);
    g[d] = -1.0;
    rows.push((g, -m_box));

    let k = d + 1;
    let nrows = rows.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut idx = vec![0usize; k];
    // Enumerate all k-subsets of constraint rows.
    fn next_subset(idx: &mut [usize], n: usize) -> bool {
        let k = idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] < n - (k - i) {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for i in 0..k {
        idx[i] = i;
    }
    if nrows >= k {
        loop {
            let a = DMatrix::from_fn(k, k, |r, c| rows[idx[r]].0[c]);
            let b = DVector::from_fn(k, |r, _| rows[idx[r]].1);
            if let Some(sol) = a.lu().solve(&b) {
                if sol.iter().all(|v| v.is_finite()) {
                    let feasible = rows
                        .iter()
                        .all(|(g, rhs)| g.dot(&sol) >= rhs - 1e-9 * (1.0 + rhs.abs()));
                    if feasible {
                        let s = sol[d];
                        if best.as_ref().map_or(true, |(_, bs)| s > *bs) {
                            best = Some((sol.clone(), s));
                        }
                    }
                }
            }
            if !next_subset(&mut idx, nrows) {
                break;
            }
        }
    }

    best.map(|(sol, s)| {
        let t = sol.rows(0, d).into_owned();
        StrictWitness { point: &x0 + &basis * t, min_slack: s }
    })
}

/// Minimum of `|l(z)|` over a segment where the linear functional takes the
/// endpoint values `a` and `b`: zero if the sign changes, else the smaller
/// endpoint magnitude.
pub fn min_abs_linear(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0) {
        0.0
    } else {
        a.abs().min(b.abs())
    }
}
