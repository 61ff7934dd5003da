//! Derivative projection operators and the polytope norms certifying their
//! contraction properties.
//!
//! For a boundary face set outside the degenerate W-set, the derivative
//! projection is the unique linear map sending `y` into the intersection of
//! the active hyperplanes along the span of the active reflection
//! directions. Its adjoint contracts the dual polytope norm, which is what
//! drives the convergence of projection compositions along boundary visits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SkError};
use crate::geometry::{FaceSet, SPData};
use crate::numeric;
use crate::tol;

/// Oblique projection attached to one face set: `P y` lies in `H_x` and
/// `P y - y` in `span{d_i}` for the active faces.
#[derive(Debug, Clone)]
pub struct DerivProjection {
    faces: FaceSet,
    matrix: DMatrix<f64>,
    h_basis: DMatrix<f64>,
    d_basis: DMatrix<f64>,
}

impl DerivProjection {
    pub fn faces(&self) -> &FaceSet {
        &self.faces
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn h_basis(&self) -> &DMatrix<f64> {
        &self.h_basis
    }

    pub fn d_basis(&self) -> &DMatrix<f64> {
        &self.d_basis
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.matrix * y
    }

    /// Transpose operator: maps into the orthogonal complement of the
    /// direction span, moving along the orthogonal complement of `H_x`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }
}

/// Builds the derivative projection for a face set: with direction columns
/// `D` and normal columns `Nm`, `P = I - D (Nm' D)^{-1} Nm'`. The empty face
/// set yields the identity. A singular (or ill-conditioned) coupling matrix
/// means the face set lies in the W-set and no projection exists.
pub fn build_projection(sp: &SPData, faces: &FaceSet) -> Result<DerivProjection> {
    let dim = sp.dim();
    let (h_basis, d_basis) = sp.subspace_bases(faces);
    if faces.is_empty() {
        return Ok(DerivProjection {
            faces: faces.clone(),
            matrix: DMatrix::identity(dim, dim),
            h_basis,
            d_basis,
        });
    }
    let m = faces.len();
    let d = DMatrix::from_fn(dim, m, |i, j| sp.direction(faces.indices()[j])[i]);
    let nm = DMatrix::from_fn(dim, m, |i, j| sp.normal(faces.indices()[j])[i]);
    let coupling = nm.transpose() * &d;
    let svd = coupling.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > tol::CONDITION_GUARD {
        return Err(SkError::Assumption(format!(
            "face set {} lies in the W-set: direction/normal coupling is singular",
            faces
        )));
    }
    let inv = coupling
        .lu()
        .try_inverse()
        .ok_or_else(|| SkError::Assumption(format!("coupling matrix for {} not invertible", faces)))?;
    let matrix = DMatrix::identity(dim, dim) - &d * inv * nm.transpose();
    Ok(DerivProjection { faces: faces.clone(), matrix, h_basis, d_basis })
}

/// Compact, convex, symmetric polytope with the origin interior, given by
/// vertices; the half-space representation is derived on construction.
#[derive(Debug, Clone)]
pub struct BPolytope {
    vertices: Vec<DVector<f64>>,
    /// Outward facets scaled so that the polytope is `{x : <a, x> <= 1}`.
    facets_scaled: Vec<DVector<f64>>,
    /// Unit outward facet normals with their offsets, plus vertex indices on
    /// each facet (used by the compatibility check).
    facets: Vec<Facet>,
}

#[derive(Debug, Clone)]
pub struct Facet {
    pub normal: DVector<f64>,
    pub offset: f64,
    pub vertex_ids: Vec<usize>,
}

impl BPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(SkError::InvalidInput("polytope needs vertices".into()));
        }
        let dim = vertices[0].len();
        if dim == 0 || dim > 3 {
            return Err(SkError::Unsupported("polytopes supported up to dimension 3".into()));
        }
        for v in &vertices {
            if v.len() != dim {
                return Err(SkError::InvalidInput("inconsistent vertex dimensions".into()));
            }
            if !vertices.iter().any(|w| (w + v).norm() <= 1e-12 * (1.0 + v.norm())) {
                return Err(SkError::InvalidInput(format!(
                    "polytope is not symmetric: missing -v for vertex {:?}",
                    v
                )));
            }
        }
        let facets = enumerate_facets(&vertices, dim)?;
        if facets.iter().any(|f| f.offset <= 1e-12) {
            return Err(SkError::InvalidInput("origin must lie strictly inside the polytope".into()));
        }
        let facets_scaled = facets.iter().map(|f| &f.normal / f.offset).collect();
        Ok(Self { vertices, facets_scaled, facets })
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Minkowski gauge: `min{r >= 0 : y in r B}`, evaluated per facet.
    pub fn norm(&self, y: &DVector<f64>) -> f64 {
        self.facets_scaled
            .iter()
            .map(|a| a.dot(y))
            .fold(0.0_f64, f64::max)
    }

    /// Dual-set norm: support function over the vertices.
    pub fn dual_norm(&self, y: &DVector<f64>) -> f64 {
        self.vertices.iter().map(|v| v.dot(y)).fold(0.0_f64, f64::max)
    }
}

/// Facet enumeration for tiny vertex lists: every `dim`-subset spans a
/// candidate hyperplane; keep the ones supporting the whole vertex set.
fn enumerate_facets(vertices: &[DVector<f64>], dim: usize) -> Result<Vec<Facet>> {
    let n = vertices.len();
    if n > 24 {
        return Err(SkError::Unsupported("polytope facet enumeration capped at 24 vertices".into()));
    }
    let mut facets: Vec<Facet> = Vec::new();
    let mut push_candidate = |normal: DVector<f64>, offset: f64| {
        if offset.abs() <= 1e-12 {
            return;
        }
        let (normal, offset) = if offset < 0.0 { (-normal, -offset) } else { (normal, offset) };
        let unit = &normal / normal.norm();
        let scale = offset / normal.norm();
        // supporting?
        let tolerance = 1e-9 * (1.0 + scale.abs());
        if vertices.iter().any(|v| unit.dot(v) > scale + tolerance) {
            return;
        }
        if facets.iter().any(|f| (&f.normal - &unit).norm() <= 1e-9 && (f.offset - scale).abs() <= 1e-9) {
            return;
        }
        let vertex_ids = vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| (unit.dot(v) - scale).abs() <= tolerance)
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        if vertex_ids.len() >= dim {
            facets.push(Facet { normal: unit, offset: scale, vertex_ids });
        }
    };

    match dim {
        1 => {
            for v in vertices {
                push_candidate(DVector::from_element(1, 1.0), v[0]);
            }
        }
        2 => {
            for i in 0..n {
                for j in i + 1..n {
                    let e = &vertices[j] - &vertices[i];
                    if e.norm() <= 1e-12 {
                        continue;
                    }
                    let normal = DVector::from_vec(vec![e[1], -e[0]]);
                    push_candidate(normal.clone(), normal.dot(&vertices[i]));
                }
            }
        }
        3 => {
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        let u = &vertices[j] - &vertices[i];
                        let w = &vertices[k] - &vertices[i];
                        let normal = DVector::from_vec(vec![
                            u[1] * w[2] - u[2] * w[1],
                            u[2] * w[0] - u[0] * w[2],
                            u[0] * w[1] - u[1] * w[0],
                        ]);
                        if normal.norm() <= 1e-12 {
                            continue;
                        }
                        push_candidate(normal.clone(), normal.dot(&vertices[i]));
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    if facets.is_empty() {
        return Err(SkError::InvalidInput("vertex list does not span a full-dimensional polytope".into()));
    }
    Ok(facets)
}

/// Verifies the geometric compatibility between a candidate polytope `B` and
/// the reflection data: on the part of `partial B` whose normals are not
/// orthogonal to a direction `d_i`, the functional `<., n_i>` must stay at
/// least `delta` in magnitude. Checking each closed facet against its own
/// normal covers every boundary point and every generator of its normal
/// cone.
pub fn check_b_compatibility(sp: &SPData, b: &BPolytope, delta: f64) -> Result<()> {
    if b.dim() != sp.dim() {
        return Err(SkError::InvalidInput("polytope dimension mismatch".into()));
    }
    for (fi, facet) in b.facets().iter().enumerate() {
        for i in 0..sp.num_faces() {
            if facet.normal.dot(sp.direction(i)).abs() <= 1e-12 {
                continue;
            }
            // min |<z, n_i>| over the closed facet: linear over the convex
            // hull of its vertices, so a sign change means it vanishes.
            let vals: Vec<f64> = facet
                .vertex_ids
                .iter()
                .map(|&vid| b.vertices()[vid].dot(sp.normal(i)))
                .collect();
            let has_pos = vals.iter().any(|&v| v > 0.0);
            let has_neg = vals.iter().any(|&v| v < 0.0);
            let min_abs = if has_pos && has_neg {
                0.0
            } else {
                vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
            };
            if min_abs < delta - 1e-12 {
                return Err(SkError::Assumption(format!(
                    "facet {} of B admits |<z, n_{}>| = {:.6} < delta = {} while its normal meets d_{}",
                    fi, i, min_abs, delta, i
                )));
            }
        }
    }
    Ok(())
}

/// Result of a cyclic projection-composition run.
#[derive(Debug, Clone)]
pub struct CompositionLimit {
    pub value: DVector<f64>,
    pub cycles: usize,
    /// Ratio of successive per-cycle displacements (NaN when convergence was
    /// immediate).
    pub contraction_factor: f64,
}

/// Applies the projections of `face_sequence` cyclically to `y` until a full
/// cycle moves the iterate by less than `tolerance`, then asserts the limit
/// agrees with the direct projection of the target face set within ten times
/// the tolerance. Convergence is measured per cycle because single steps can
/// be isometric on subspaces.
pub fn composition_limit(
    sp: &SPData,
    face_sequence: &[FaceSet],
    target: &FaceSet,
    y: &DVector<f64>,
    max_iter: usize,
    tolerance: f64,
) -> Result<CompositionLimit> {
    if face_sequence.is_empty() {
        return Err(SkError::InvalidInput("face sequence must be nonempty".into()));
    }
    let projections: Vec<DerivProjection> = face_sequence
        .iter()
        .map(|fs| build_projection(sp, fs))
        .collect::<Result<_>>()?;
    let target_proj = build_projection(sp, target)?;
    let mut current = y.clone();
    let mut prev_move = f64::NAN;
    let mut factor = f64::NAN;
    for cycle in 1..=max_iter {
        let before = current.clone();
        for p in &projections {
            current = p.apply(&current);
        }
        let moved = (&current - &before).norm();
        if prev_move.is_finite() && prev_move > 0.0 {
            factor = moved / prev_move;
        }
        if moved < tolerance {
            let direct = target_proj.apply(y);
            let gap = (&current - &direct).norm();
            if gap > 10.0 * tolerance {
                return Err(SkError::Numerical(format!(
                    "cycle limit differs from the direct projection by {:.3e}",
                    gap
                )));
            }
            return Ok(CompositionLimit { value: current, cycles: cycle, contraction_factor: factor });
        }
        prev_move = moved;
    }
    Err(SkError::Convergence(format!(
        "projection cycles did not settle within {} iterations (last move {:.3e})",
        max_iter, prev_move
    )))
}

/// Largest dual-norm contraction factor of one covering cycle of adjoint
/// projections over sampled directions of `H_x^perp` (the reported
/// `delta`-hat of the uniform cycle contraction).
pub fn cycle_contraction_factor(
    sp: &SPData,
    cycle: &[FaceSet],
    target: &FaceSet,
    b: &BPolytope,
    samples: usize,
) -> Result<f64> {
    let projections: Vec<DMatrix<f64>> = cycle
        .iter()
        .map(|fs| build_projection(sp, fs).map(|p| p.adjoint()))
        .collect::<Result<_>>()?;
    let (h, _) = sp.subspace_bases(target);
    let dim = sp.dim();
    let h_perp = numeric::orthonormal_complement(
        &(0..h.ncols()).map(|c| h.column(c).into_owned()).collect::<Vec<_>>(),
        dim,
    );
    if h_perp.ncols() == 0 {
        return Ok(0.0);
    }
    let mut worst = 0.0_f64;
    for s in 0..samples {
        let mut coef = DVector::zeros(h_perp.ncols());
        for c in 0..h_perp.ncols() {
            // Low-discrepancy-ish deterministic directions.
            coef[c] = ((s * (c + 2) + 1) as f64 * 0.754877666).sin();
        }
        let y = &h_perp * coef;
        let denom = b.dual_norm(&y);
        if denom <= 1e-12 {
            continue;
        }
        let mut z = y.clone();
        for p in projections.iter().rev() {
            z = p * z;
        }
        worst = worst.max(b.dual_norm(&z) / denom);
    }
    Ok(worst)
}
