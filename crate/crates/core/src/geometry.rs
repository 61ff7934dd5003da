//! Polyhedral reflection data: the domain `G` as an intersection of half
//! spaces, face-set queries, the associated subspaces and cones, the
//! compatible projection map onto `G`, its directional derivative, and
//! boundary classification (smooth/nonsmooth parts, V- and W-sets).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkError};
use crate::numeric;
use crate::tol;

/// Sorted set of face indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FaceSet(Vec<usize>);

impl FaceSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &FaceSet) -> FaceSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        FaceSet::new(v)
    }

    pub fn is_subset_of(&self, other: &FaceSet) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for FaceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i)?;
        }
        write!(f, "}}")
    }
}

/// Closed-form projection map supplied with a named example configuration.
#[derive(Clone)]
pub struct CustomPi {
    pub name: String,
    pub project: fn(&DVector<f64>) -> DVector<f64>,
}

impl fmt::Debug for CustomPi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPi({})", self.name)
    }
}

/// Which implementation of the compatible projection map is available.
#[derive(Debug, Clone, Default)]
pub enum PiFamily {
    /// No projection map available; solvers requiring one will refuse.
    #[default]
    General,
    /// Half line `[0, inf)`: `pi(x) = max(x, 0)`.
    OneDim,
    /// Nonnegative quadrant with two oblique directions: complementarity
    /// case analysis over the boundary-resolution patterns.
    Orthant,
    /// User-supplied closed form.
    Custom(Arc<CustomPi>),
}

impl PiFamily {
    pub fn name(&self) -> String {
        match self {
            PiFamily::General => "general".into(),
            PiFamily::OneDim => "one_dim".into(),
            PiFamily::Orthant => "orthant".into(),
            PiFamily::Custom(c) => c.name.clone(),
        }
    }
}

/// Reflection data `{(d_i, n_i, c_i)}` for the polyhedral domain
/// `G = {x : <x, n_i> >= c_i for all i}` with unit normals and directions
/// normalized so that `<d_i, n_i> = 1`.
#[derive(Debug, Clone)]
pub struct SPData {
    normals: Vec<DVector<f64>>,
    offsets: Vec<f64>,
    directions: Vec<DVector<f64>>,
    family: PiFamily,
}

#[derive(Serialize, Deserialize)]
struct SpDataJson {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    directions: Vec<Vec<f64>>,
    family: String,
}

impl SPData {
    pub fn new(
        normals: Vec<DVector<f64>>,
        offsets: Vec<f64>,
        directions: Vec<DVector<f64>>,
        family: PiFamily,
    ) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() || normals.len() != directions.len()
        {
            return Err(SkError::InvalidInput(
                "need matching nonempty normals/offsets/directions".into(),
            ));
        }
        let dim = normals[0].len();
        for (i, n) in normals.iter().enumerate() {
            if n.len() != dim || directions[i].len() != dim {
                return Err(SkError::InvalidInput(format!(
                    "face {}: inconsistent dimension",
                    i
                )));
            }
            if (n.norm() - 1.0).abs() > tol::UNIT_NORM {
                return Err(SkError::InvalidInput(format!(
                    "face {}: |n_i| = {} violates the unit-normal invariant",
                    i,
                    n.norm()
                )));
            }
            let dn = directions[i].dot(n);
            if (dn - 1.0).abs() > tol::DIRECTION_NORMALIZATION {
                return Err(SkError::InvalidInput(format!(
                    "face {}: <d_i, n_i> = {} violates the normalization invariant",
                    i, dn
                )));
            }
        }
        let sp = Self { normals, offsets, directions, family };
        // Nonemptiness of G.
        let witness = numeric::strict_feasibility(
            &sp.normals,
            &sp.offsets,
            &[],
            sp.feasibility_box(),
        )
        .ok_or_else(|| SkError::InvalidInput("domain emptiness check failed".into()))?;
        if witness.min_slack < -1e-9 {
            return Err(SkError::InvalidInput(
                "domain G is empty: no point satisfies all half-space constraints".into(),
            ));
        }
        Ok(sp)
    }

    fn feasibility_box(&self) -> f64 {
        1e3 * (1.0 + self.offsets.iter().fold(0.0_f64, |m, c| m.max(c.abs())))
    }

    pub fn dim(&self) -> usize {
        self.normals[0].len()
    }

    pub fn num_faces(&self) -> usize {
        self.normals.len()
    }

    pub fn normal(&self, i: usize) -> &DVector<f64> {
        &self.normals[i]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn direction(&self, i: usize) -> &DVector<f64> {
        &self.directions[i]
    }

    pub fn family(&self) -> &PiFamily {
        &self.family
    }

    pub fn with_family(mut self, family: PiFamily) -> Self {
        self.family = family;
        self
    }

    /// Reflection matrix with the directions as columns (J x N).
    pub fn reflection_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.num_faces(), |i, j| self.directions[j][i])
    }

    /// Signed distance of `x` to the face-i half-space boundary.
    pub fn slack(&self, x: &DVector<f64>, i: usize) -> f64 {
        self.normals[i].dot(x) - self.offsets[i]
    }

    pub fn in_domain(&self, x: &DVector<f64>, tolerance: f64) -> bool {
        (0..self.num_faces()).all(|i| self.slack(x, i) >= -tolerance)
    }

    /// Faces whose constraints are tight at `x` within `tolerance`. Errors
    /// when `x` violates the domain beyond the same tolerance.
    pub fn active_faces(&self, x: &DVector<f64>, tolerance: f64) -> Result<FaceSet> {
        let mut active = Vec::new();
        for i in 0..self.num_faces() {
            let s = self.slack(x, i);
            if s < -tolerance {
                return Err(SkError::DomainViolation { face: i, slack: s, tol: tolerance });
            }
            if s.abs() <= tolerance {
                active.push(i);
            }
        }
        Ok(FaceSet::new(active))
    }

    /// Orthonormal basis of `H_x = intersection of the active hyperplanes`
    /// and an orthonormal basis of `span{d_i, i in faces}`. The empty face
    /// set yields the full space and the zero subspace respectively.
    pub fn subspace_bases(&self, faces: &FaceSet) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows: Vec<DVector<f64>> = faces.iter().map(|i| self.normals[i].clone()).collect();
        let h = numeric::orthonormal_complement(&rows, self.dim());
        let dirs: Vec<DVector<f64>> = faces.iter().map(|i| self.directions[i].clone()).collect();
        let d = numeric::orthonormal_span(&dirs, self.dim());
        (h, d)
    }

    /// Off-diagonal matrix of direction/normal couplings together with its
    /// spectral radius via shifted power iteration. Only defined in the
    /// square setting `N = J`.
    pub fn q_matrix(&self) -> Result<(DMatrix<f64>, f64)> {
        let n = self.num_faces();
        if n != self.dim() {
            return Err(SkError::Unsupported(format!(
                "coupling matrix needs N = J (got N = {}, J = {})",
                n,
                self.dim()
            )));
        }
        let q = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                self.directions[i].dot(&self.normals[j]).abs()
            }
        });
        let rho = spectral_radius_nonnegative(&q);
        Ok((q, rho))
    }

    /// Enumerates feasible face subsets and classifies each: smooth
    /// (singleton), nonsmooth, whether the direction cone contains a line
    /// (V-set) and whether the active hyperplanes together with the
    /// direction span fail to span the space (W-set).
    pub fn classify_boundary(&self) -> Result<BoundaryClassification> {
        let n = self.num_faces();
        if n > tol::MAX_ENUMERATED_FACES {
            return Err(SkError::EnumerationBudget { faces: n, max: tol::MAX_ENUMERATED_FACES });
        }
        let mut entries = Vec::new();
        for mask in 1u32..(1 << n) {
            let faces: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let witness = match numeric::strict_feasibility(
                &self.normals,
                &self.offsets,
                &faces,
                self.feasibility_box(),
            ) {
                Some(w) if w.min_slack > 1e-9 => w,
                _ => continue,
            };
            let face_set = FaceSet::new(faces.clone());
            let dirs: Vec<DVector<f64>> =
                faces.iter().map(|&i| self.directions[i].clone()).collect();
            let in_v = numeric::cone_contains_line(&dirs);
            let (h, d) = self.subspace_bases(&face_set);
            let combined = if d.ncols() == 0 {
                h.clone()
            } else if h.ncols() == 0 {
                d.clone()
            } else {
                let mut m = DMatrix::zeros(self.dim(), h.ncols() + d.ncols());
                m.columns_mut(0, h.ncols()).copy_from(&h);
                m.columns_mut(h.ncols(), d.ncols()).copy_from(&d);
                m
            };
            let in_w = numeric::rank(&combined) < self.dim();
            entries.push(FaceSetClass {
                smooth: face_set.len() == 1,
                nonsmooth: face_set.len() >= 2,
                in_v,
                in_w,
                witness: witness.point,
                faces: face_set,
            });
        }
        Ok(BoundaryClassification { entries })
    }

    /// Whether the active face set at a boundary point is degenerate in the
    /// W-sense (`span(H_x cup d(x)) != R^J`).
    pub fn face_set_in_w(&self, faces: &FaceSet) -> bool {
        if faces.is_empty() {
            return false;
        }
        let (h, d) = self.subspace_bases(faces);
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, h.ncols() + d.ncols());
        if h.ncols() > 0 {
            m.columns_mut(0, h.ncols()).copy_from(&h);
        }
        if d.ncols() > 0 {
            m.columns_mut(h.ncols(), d.ncols()).copy_from(&d);
        }
        numeric::rank(&m) < dim
    }

    /// Compatible projection onto `G`: identity inside, and otherwise a point
    /// of the boundary reached along the permissible directions there.
    pub fn project_pi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.in_domain(x, 0.0) {
            return Ok(x.clone());
        }
        match &self.family {
            PiFamily::OneDim => Ok(DVector::from_element(1, x[0].max(0.0))),
            PiFamily::Orthant => self.project_orthant(x),
            PiFamily::Custom(c) => {
                let p = (c.project)(x);
                if !self.in_domain(&p, 1e-9) {
                    return Err(SkError::Assumption(format!(
                        "custom projection map left the domain at {:?}",
                        p
                    )));
                }
                Ok(p)
            }
            PiFamily::General => Err(SkError::Unsupported(
                "no projection map available for family `general`".into(),
            )),
        }
    }

    /// Case analysis for the quadrant: find `r >= 0` with `pi = x + R r` in
    /// `G` and `r_i > 0` only when `pi` lies on face `i`.
    fn project_orthant(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.dim() != 2 || self.num_faces() != 2 {
            return Err(SkError::Unsupported(
                "orthant projection requires N = J = 2".into(),
            ));
        }
        for i in 0..2 {
            if (self.offsets[i]).abs() > 0.0 || (&self.normals[i] - unit_vec(2, i)).norm() > tol::UNIT_NORM {
                return Err(SkError::Unsupported(
                    "orthant projection requires n_i = e_i, c_i = 0".into(),
                ));
            }
        }
        // Single-face patterns.
        for i in 0..2 {
            let r = -x[i];
            if r <= 0.0 {
                continue;
            }
            let p = x + self.directions[i].clone() * r;
            let j = 1 - i;
            if p[j] >= 0.0 {
                let mut p = p;
                p[i] = 0.0;
                return Ok(p);
            }
        }
        // Corner pattern: x + R r = 0.
        let r_mat = self.reflection_matrix();
        if let Some(inv) = r_mat.clone().try_inverse() {
            let r = -(&inv * x);
            if r[0] >= 0.0 && r[1] >= 0.0 {
                return Ok(DVector::zeros(2));
            }
        }
        Err(SkError::Assumption(format!(
            "no complementarity pattern resolves the projection of {:?}",
            x
        )))
    }

    /// Directional derivative of the projection map at `x` in `G` along `v`,
    /// by difference quotients at two step sizes with a Richardson
    /// extrapolation; closed form in one dimension. The result minus `v` is
    /// validated to lie in the direction cone at `x`.
    pub fn nabla_pi(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.in_domain(x, 1e-12) {
            return Err(SkError::InvalidInput("nabla_pi requires x in G".into()));
        }
        if let PiFamily::OneDim = self.family {
            let out = if x[0] > 0.0 { v[0] } else { v[0].max(0.0) };
            return Ok(DVector::from_element(1, out));
        }
        let quotient = |eps: f64| -> Result<DVector<f64>> {
            let px = self.project_pi(x)?;
            let pe = self.project_pi(&(x + v * eps))?;
            Ok((pe - px) / eps)
        };
        let ladder = [1e-4, 1e-5, 1e-6];
        let mut prev = quotient(ladder[0])?;
        for &eps in &ladder[1..] {
            let cur = quotient(eps)?;
            if (&cur - &prev).norm() <= tol::PI_DERIVATIVE_AGREE {
                // Two-point Richardson step; exact when the quotient is
                // affine in the step size.
                let eps_prev = ladder[ladder.iter().position(|&e| e == eps).unwrap() - 1];
                let extrap = (&cur * eps_prev - &prev * eps) / (eps_prev - eps);
                let active = self.active_faces(x, tol::ACTIVE_FACE)?;
                let diff = &extrap - v;
                if !active.is_empty() {
                    let dirs = DMatrix::from_fn(self.dim(), active.len(), |r, c| {
                        self.directions[active.indices()[c]][r]
                    });
                    let (_, res) = numeric::nonneg_least_squares(&dirs, &diff);
                    if res > tol::PI_DERIVATIVE_AGREE {
                        return Err(SkError::Numerical(format!(
                            "projection derivative leaves the direction cone (residual {:.3e})",
                            res
                        )));
                    }
                } else if diff.norm() > tol::PI_DERIVATIVE_AGREE {
                    return Err(SkError::Numerical(
                        "projection derivative differs from v at an interior point".into(),
                    ));
                }
                return Ok(extrap);
            }
            prev = cur;
        }
        Err(SkError::Numerical(format!(
            "difference quotients of the projection map did not stabilize at x = {:?}",
            x
        )))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let dto: SpDataJson = serde_json::from_str(text)?;
        let family = match dto.family.as_str() {
            "general" => PiFamily::General,
            "one_dim" => PiFamily::OneDim,
            "orthant" => PiFamily::Orthant,
            "w-corner" => PiFamily::Custom(Arc::new(crate::fixtures::w_corner_pi())),
            "v-cone" => PiFamily::Custom(Arc::new(crate::fixtures::v_cone_pi())),
            other => {
                return Err(SkError::InvalidInput(format!(
                    "unknown projection family `{}`",
                    other
                )))
            }
        };
        SPData::new(
            dto.normals.into_iter().map(DVector::from_vec).collect(),
            dto.offsets,
            dto.directions.into_iter().map(DVector::from_vec).collect(),
            family,
        )
    }

    pub fn to_json_string(&self) -> Result<String> {
        let dto = SpDataJson {
            normals: self.normals.iter().map(|v| v.iter().cloned().collect()).collect(),
            offsets: self.offsets.clone(),
            directions: self.directions.iter().map(|v| v.iter().cloned().collect()).collect(),
            family: self.family.name(),
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }
}

/// Classification record for one feasible face subset.
#[derive(Debug, Clone)]
pub struct FaceSetClass {
    pub faces: FaceSet,
    pub witness: DVector<f64>,
    pub smooth: bool,
    pub nonsmooth: bool,
    pub in_v: bool,
    pub in_w: bool,
}

/// All feasible face subsets with their boundary classification.
#[derive(Debug, Clone)]
pub struct BoundaryClassification {
    pub entries: Vec<FaceSetClass>,
}

impl BoundaryClassification {
    pub fn w_sets(&self) -> Vec<&FaceSetClass> {
        self.entries.iter().filter(|e| e.in_w).collect()
    }

    pub fn v_sets(&self) -> Vec<&FaceSetClass> {
        self.entries.iter().filter(|e| e.in_v).collect()
    }

    pub fn entry(&self, faces: &FaceSet) -> Option<&FaceSetClass> {
        self.entries.iter().find(|e| &e.faces == faces)
    }
}

fn unit_vec(dim: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

/// Spectral radius of an entrywise-nonnegative matrix via power iteration on
/// the shifted matrix `Q + cI` (the shift makes the Perron root strictly
/// dominant in modulus). Refined until successive Rayleigh quotients agree to
/// `tol::POWER_ITERATION`.
pub fn spectral_radius_nonnegative(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    let row_max = (0..n)
        .map(|i| (0..n).map(|j| q[(i, j)]).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let shift = row_max.max(1.0);
    let a = q + DMatrix::<f64>::identity(n, n) * shift;
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0_f64;
    for _ in 0..200_000 {
        let ax = &a * &x;
        let norm = ax.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = ax / norm;
        let rayleigh = next.dot(&(&a * &next));
        if (rayleigh - lambda).abs() <= tol::POWER_ITERATION * rayleigh.abs().max(1.0) {
            return (rayleigh - shift).max(0.0);
        }
        lambda = rayleigh;
        x = next;
    }
    (lambda - shift).max(0.0)
}

/// Convenience constructor: the nonnegative quadrant with unit normals
/// `e_1, e_2`, zero offsets and the given reflection directions (columns).
pub fn quadrant_sp(d1: [f64; 2], d2: [f64; 2]) -> Result<SPData> {
    SPData::new(
        vec![unit_vec(2, 0), unit_vec(2, 1)],
        vec![0.0, 0.0],
        vec![DVector::from_vec(d1.to_vec()), DVector::from_vec(d2.to_vec())],
        PiFamily::Orthant,
    )
}

/// The half line with normal reflection.
pub fn half_line_sp() -> SPData {
    SPData::new(
        vec![DVector::from_element(1, 1.0)],
        vec![0.0],
        vec![DVector::from_element(1, 1.0)],
        PiFamily::OneDim,
    )
    .expect("half line data is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn normal_quadrant() -> SPData {
        quadrant_sp([1.0, 0.0], [0.0, 1.0]).unwrap()
    }

    fn ghr_quadrant() -> SPData {
        quadrant_sp([1.0, -1.0], [0.5, 1.0]).unwrap()
    }

    #[test]
    fn active_faces_examples() {
        let sp = normal_quadrant();
        assert_eq!(
            sp.active_faces(&vec2(0.0, 0.0), 1e-9).unwrap(),
            FaceSet::new(vec![0, 1])
        );
        assert_eq!(sp.active_faces(&vec2(1.0, 1.0), 1e-9).unwrap(), FaceSet::empty());
        assert_eq!(sp.active_faces(&vec2(0.0, 3.0), 1e-9).unwrap(), FaceSet::new(vec![0]));
        assert!(sp.active_faces(&vec2(-1.0, 0.0), 1e-9).is_err());
    }

    #[test]
    fn active_faces_upper_semicontinuity() {
        let sp = ghr_quadrant();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..200 {
            let x = vec2(if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.1..2.0) }, 0.0);
            let active = sp.active_faces(&x, 1e-9).unwrap();
            // Data-dependent radius from the inactive slack gaps.
            let gap = (0..2)
                .filter(|i| !active.contains(*i))
                .map(|i| sp.slack(&x, i))
                .fold(f64::INFINITY, f64::min);
            let radius = (gap / 2.0).min(0.05).max(1e-6);
            for _ in 0..20 {
                let dx = vec2(rng.gen_range(-radius..radius), rng.gen_range(0.0..radius));
                let y = &x + dx;
                if !sp.in_domain(&y, 0.0) {
                    continue;
                }
                let ay = sp.active_faces(&y, 1e-12).unwrap();
                assert!(ay.is_subset_of(&active), "usc violated at {:?} -> {:?}", x, y);
            }
        }
    }

    #[test]
    fn subspace_bases_examples() {
        let sp = ghr_quadrant();
        let (h, d) = sp.subspace_bases(&FaceSet::new(vec![0]));
        assert_eq!(h.ncols(), 1);
        assert_relative_eq!(h.column(0)[0].abs(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(h.column(0)[1].abs(), 1.0, epsilon = 1e-12);
        assert_eq!(d.ncols(), 1);

        let (h2, d2) = sp.subspace_bases(&FaceSet::new(vec![0, 1]));
        assert_eq!(h2.ncols(), 0);
        assert_eq!(d2.ncols(), 2);

        let (h3, d3) = sp.subspace_bases(&FaceSet::empty());
        assert_eq!(h3.ncols(), 2);
        assert_eq!(d3.ncols(), 0);
    }

    #[test]
    fn q_matrix_examples() {
        let (q, rho) = ghr_quadrant().q_matrix().unwrap();
        assert_relative_eq!(q[(0, 1)], 1.0);
        assert_relative_eq!(q[(1, 0)], 0.5);
        assert_relative_eq!(q[(0, 0)], 0.0);
        assert_relative_eq!(rho, (0.5_f64).sqrt(), epsilon = 1e-10);

        let (q0, rho0) = normal_quadrant().q_matrix().unwrap();
        assert_eq!(q0, DMatrix::zeros(2, 2));
        assert_relative_eq!(rho0, 0.0, epsilon = 1e-12);

        let (q2, rho2) = quadrant_sp([1.0, 1.0], [1.0, 1.0]).unwrap().q_matrix().unwrap();
        assert_relative_eq!(q2[(0, 1)], 1.0);
        assert_relative_eq!(q2[(1, 0)], 1.0);
        assert_relative_eq!(rho2, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_radius_matches_dense_solve() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..5);
            let q = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            });
            let rho = spectral_radius_nonnegative(&q);
            let dense = q
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0_f64, f64::max);
            assert_relative_eq!(rho, dense, epsilon = 1e-8);
        }
    }

    #[test]
    fn classify_quadrant_has_no_w() {
        let class = ghr_quadrant().classify_boundary().unwrap();
        assert!(class.w_sets().is_empty());
        assert_eq!(class.entries.len(), 3);
        let corner = class.entry(&FaceSet::new(vec![0, 1])).unwrap();
        assert!(corner.nonsmooth && !corner.smooth);
        assert!(corner.witness.norm() <= 1e-6);
    }

    #[test]
    fn classify_equal_directions_w_at_corner() {
        let sp = quadrant_sp([1.0, 1.0], [1.0, 1.0]).unwrap();
        let class = sp.classify_boundary().unwrap();
        let ws = class.w_sets();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].faces, FaceSet::new(vec![0, 1]));
    }

    #[test]
    fn projection_examples() {
        let one = half_line_sp();
        assert_relative_eq!(one.project_pi(&DVector::from_element(1, -2.0)).unwrap()[0], 0.0);
        assert_relative_eq!(one.project_pi(&DVector::from_element(1, 3.0)).unwrap()[0], 3.0);

        let sp = ghr_quadrant();
        let inside = vec2(0.3, 0.7);
        assert_eq!(sp.project_pi(&inside).unwrap(), inside);
    }

    #[test]
    fn projection_is_idempotent_and_cone_compatible() {
        let sp = ghr_quadrant();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = vec2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if sp.in_domain(&x, 0.0) {
                continue;
            }
            let p = sp.project_pi(&x).unwrap();
            assert_eq!(sp.project_pi(&p).unwrap(), p, "idempotence violated");
            let active = sp.active_faces(&p, 1e-12).unwrap();
            assert!(!active.is_empty());
            let dirs = DMatrix::from_fn(2, active.len(), |r, c| {
                sp.direction(active.indices()[c])[r]
            });
            let diff = &p - &x;
            let (_, res) = numeric::nonneg_least_squares(&dirs, &diff);
            assert!(res <= tol::CONE_RESIDUAL, "cone residual {}", res);
        }
    }

    #[test]
    fn nabla_pi_examples() {
        let one = half_line_sp();
        let at0 = one
            .nabla_pi(&DVector::from_element(1, 0.0), &DVector::from_element(1, -1.0))
            .unwrap();
        assert_relative_eq!(at0[0], 0.0);

        let sp = ghr_quadrant();
        let interior = sp.nabla_pi(&vec2(0.5, 0.5), &vec2(-3.0, 2.0)).unwrap();
        assert_relative_eq!(interior[0], -3.0, epsilon = 1e-9);
        assert_relative_eq!(interior[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn sp_json_roundtrip_and_validation() {
        let sp = ghr_quadrant();
        let text = sp.to_json_string().unwrap();
        let back = SPData::from_json_str(&text).unwrap();
        assert_eq!(back.num_faces(), 2);
        assert!(matches!(back.family(), PiFamily::Orthant));

        let bad = r#"{"normals": [[2.0, 0.0]], "offsets": [0.0], "directions": [[1.0, 0.0]], "family": "general"}"#;
        let err = SPData::from_json_str(bad).unwrap_err();
        assert!(err.to_string().contains("unit-normal"));
    }
}
