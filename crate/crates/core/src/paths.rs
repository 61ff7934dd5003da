//! Path containers and calculus on a finite horizon: continuous
//! piecewise-linear paths, right-continuous step paths with recorded left
//! limits, sup-norms, time shifts and grid refinement.
//!
//! Piecewise-linear paths interpolate linearly between strictly increasing
//! breakpoints starting at time zero and extrapolate by their last value.
//! Step paths are constant on `[s_k, s_{k+1})`; the left limit at each event
//! is stored rather than recomputed so that regularization rules can act on
//! the exact pre-event value.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::error::{Result, SkError};

/// Tolerance for identifying coincident breakpoint times during refinement.
const TIME_SNAP: f64 = 1e-12;

/// Continuous piecewise-linear path on `[0, T]`, constant after `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwLinearPath {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl PwLinearPath {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(SkError::InvalidInput(
                "path needs matching, nonempty time/value lists".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(SkError::InvalidInput("path must start at time 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SkError::InvalidInput("breakpoint times must strictly increase".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(SkError::InvalidInput("path values must share one dimension".into()));
        }
        Ok(Self { times, values })
    }

    /// Constant path with the given horizon.
    pub fn constant(value: DVector<f64>, horizon: f64) -> Self {
        Self { times: vec![0.0, horizon], values: vec![value.clone(), value] }
    }

    /// One-dimensional path from scalar samples.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let vals = values.into_iter().map(|v| DVector::from_element(1, v)).collect();
        Self::new(times, vals)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// Index of the segment containing `t`: largest `k` with `times[k] <= t`.
    fn segment_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    /// Linear interpolation; constant beyond the last breakpoint and before 0.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.horizon() {
            return self.values.last().unwrap().clone();
        }
        let k = self.segment_index(t);
        if self.times[k] == t {
            return self.values[k].clone();
        }
        let dt = self.times[k + 1] - self.times[k];
        let w = (t - self.times[k]) / dt;
        &self.values[k] * (1.0 - w) + &self.values[k + 1] * w
    }

    pub fn eval_scalar(&self, t: f64) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        self.eval(t)[0]
    }

    /// Supremum of the Euclidean norm over `[0, t]`. On each segment the
    /// squared norm is a convex quadratic in the time parameter, so its
    /// maximum sits at a segment endpoint; the interior critical point is the
    /// minimum.
    pub fn sup_norm(&self, t: f64) -> f64 {
        let mut best = 0.0_f64;
        for (k, time) in self.times.iter().enumerate() {
            if *time > t {
                break;
            }
            best = best.max(self.values[k].norm());
        }
        best.max(self.eval(t).norm())
    }

    /// `anchor + f(s + .) - f(s)` with breakpoints re-based to start at zero.
    pub fn time_shift(&self, s: f64, anchor: &DVector<f64>) -> Self {
        let fs = self.eval(s);
        let mut times = vec![0.0];
        let mut values = vec![anchor.clone()];
        for (k, &tk) in self.times.iter().enumerate() {
            if tk > s + TIME_SNAP {
                times.push(tk - s);
                values.push(anchor + &self.values[k] - &fs);
            }
        }
        if times.len() == 1 {
            // Shift beyond the horizon: constant path.
            times.push(1.0);
            values.push(anchor.clone());
        }
        Self { times, values }
    }

    /// Identical function with the breakpoint set unioned with `grid`.
    pub fn refine(&self, grid: &[f64]) -> Self {
        let mut times: Vec<f64> = self.times.clone();
        for &g in grid {
            if g < 0.0 {
                continue;
            }
            match times.binary_search_by(|x| x.partial_cmp(&g).unwrap()) {
                Ok(_) => {}
                Err(pos) => {
                    let near_prev = pos > 0 && (g - times[pos - 1]).abs() <= TIME_SNAP;
                    let near_next = pos < times.len() && (times[pos] - g).abs() <= TIME_SNAP;
                    if !near_prev && !near_next {
                        times.insert(pos, g);
                    }
                }
            }
        }
        let values = times.iter().map(|&t| self.eval(t)).collect();
        Self { times, values }
    }

    /// `a * self + b * other` on the union of both breakpoint sets.
    pub fn linear_combo(&self, a: f64, other: &PwLinearPath, b: f64) -> Self {
        let merged = self.refine(other.times());
        let times = merged.times.clone();
        let values = times
            .iter()
            .map(|&t| merged.eval(t) * a + other.eval(t) * b)
            .collect();
        Self { times, values }
    }

    /// Supremum-norm distance to another path over `[0, t]`, exact for the
    /// union breakpoint set.
    pub fn sup_distance(&self, other: &PwLinearPath, t: f64) -> f64 {
        self.linear_combo(1.0, other, -1.0).sup_norm(t)
    }

    /// CSV rows `t, v_1, .., v_J`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim = self.dim();
        write!(w, "t")?;
        for j in 0..dim {
            write!(w, ",v{}", j + 1)?;
        }
        writeln!(w)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            write!(w, "{:.17e}", t)?;
            for j in 0..dim {
                write!(w, ",{:.17e}", v[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| SkError::InvalidInput(format!("csv line {}: {}", lineno + 1, e)))?;
            if cells.len() < 2 {
                return Err(SkError::InvalidInput(format!("csv line {}: too few columns", lineno + 1)));
            }
            times.push(cells[0]);
            values.push(DVector::from_vec(cells[1..].to_vec()));
        }
        Self::new(times, values)
    }
}

/// Right-continuous step path with finitely many events and stored left
/// limits. The value on `[s_k, s_{k+1})` is `values[k]`; `left_values[k]` is
/// the recorded limit from the left at `s_k` (equal to `values[0]` at the
/// origin by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagStepPath {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
    left_values: Vec<DVector<f64>>,
}

impl CadlagStepPath {
    pub fn new(
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
        left_values: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times.len() != left_values.len() {
            return Err(SkError::InvalidInput("step path lists must match and be nonempty".into()));
        }
        if times[0] != 0.0 {
            return Err(SkError::InvalidInput("step path must start at time 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SkError::InvalidInput("event times must strictly increase".into()));
        }
        Ok(Self { times, values, left_values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn left_values(&self) -> &[DVector<f64>] {
        &self.left_values
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        };
        self.values[k].clone()
    }

    /// Recorded left limit at event `k`.
    pub fn left_value(&self, k: usize) -> &DVector<f64> {
        &self.left_values[k]
    }

    /// Supremum of the norm over `[0, t]`, covering both event values and
    /// recorded left limits.
    pub fn sup_norm(&self, t: f64) -> f64 {
        let mut best = 0.0_f64;
        for (k, time) in self.times.iter().enumerate() {
            if *time > t {
                break;
            }
            best = best.max(self.values[k].norm());
            if k > 0 {
                best = best.max(self.left_values[k].norm());
            }
        }
        best
    }

    /// Largest difference (in Euclidean norm) of event values against another
    /// step path sampled on the same event times.
    pub fn sup_distance(&self, other: &CadlagStepPath, t: f64) -> f64 {
        let mut best = 0.0_f64;
        for (k, time) in self.times.iter().enumerate() {
            if *time > t {
                break;
            }
            best = best.max((&self.values[k] - other.eval(*time)).norm());
        }
        best
    }

    /// CSV rows `t, v_1.., left_v1..`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim = self.dim();
        write!(w, "t")?;
        for j in 0..dim {
            write!(w, ",v{}", j + 1)?;
        }
        for j in 0..dim {
            write!(w, ",left_v{}", j + 1)?;
        }
        writeln!(w)?;
        for k in 0..self.times.len() {
            write!(w, "{:.17e}", self.times[k])?;
            for j in 0..dim {
                write!(w, ",{:.17e}", self.values[k][j])?;
            }
            for j in 0..dim {
                write!(w, ",{:.17e}", self.left_values[k][j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Grid samples of a function that is only left or right continuous at each
/// time (the regularized derivative lives here). Values are pointwise at the
/// sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl SampledPath {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        };
        self.values[k].clone()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim = self.values[0].len();
        write!(w, "t")?;
        for j in 0..dim {
            write!(w, ",v{}", j + 1)?;
        }
        writeln!(w)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            write!(w, "{:.17e}", t)?;
            for j in 0..dim {
                write!(w, ",{:.17e}", v[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Free-function form of the supremum norm, matching the operation surface.
pub fn sup_norm(f: &PwLinearPath, t: f64) -> f64 {
    f.sup_norm(t)
}

/// Free-function form of the time shift.
pub fn time_shift(f: &PwLinearPath, s: f64, anchor: &DVector<f64>) -> PwLinearPath {
    f.time_shift(s, anchor)
}

/// Free-function form of breakpoint refinement.
pub fn refine(f: &PwLinearPath, grid: &[f64]) -> PwLinearPath {
    f.refine(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn interpolation_is_exact_at_breakpoints() {
        let f = PwLinearPath::new(
            vec![0.0, 0.5, 2.0],
            vec![vec2(1.0, -1.0), vec2(0.25, 3.0), vec2(-2.0, 0.5)],
        )
        .unwrap();
        for (t, v) in f.times().iter().zip(f.values()) {
            assert_eq!(&f.eval(*t), v);
        }
    }

    #[test]
    fn sup_norm_examples() {
        // f(t) = (t, 0): monotone segment.
        let f = PwLinearPath::new(vec![0.0, 2.0], vec![vec2(0.0, 0.0), vec2(2.0, 0.0)]).unwrap();
        assert_relative_eq!(f.sup_norm(1.0), 1.0);
        // constant path
        let c = PwLinearPath::constant(vec2(3.0, 4.0), 1.0);
        assert_relative_eq!(c.sup_norm(0.7), 5.0);
        // through (0,(1,0)) and (1,(-1,0)): norm dips to zero mid-segment.
        let g = PwLinearPath::new(vec![0.0, 1.0], vec![vec2(1.0, 0.0), vec2(-1.0, 0.0)]).unwrap();
        assert_relative_eq!(g.sup_norm(1.0), 1.0);
        assert!(g.sup_norm(0.5) <= 1.0);
    }

    #[test]
    fn sup_norm_is_monotone_and_dominates_endpoint() {
        let f = PwLinearPath::new(
            vec![0.0, 0.3, 1.1, 2.0],
            vec![vec2(0.2, 0.0), vec2(-1.0, 0.4), vec2(0.7, 0.7), vec2(0.0, -0.3)],
        )
        .unwrap();
        let mut prev = 0.0;
        for i in 0..=40 {
            let t = 2.0 * i as f64 / 40.0;
            let s = f.sup_norm(t);
            assert!(s + 1e-15 >= prev);
            assert!(s + 1e-15 >= f.eval(t).norm());
            prev = s;
        }
    }

    #[test]
    fn time_shift_examples() {
        let f = PwLinearPath::scalar(vec![0.0, 2.0], vec![0.0, 2.0]).unwrap();
        // S = 0, anchor = f(0): identity.
        let id = f.time_shift(0.0, &f.eval(0.0));
        assert_relative_eq!(id.eval_scalar(1.3), f.eval_scalar(1.3));
        // f(t) = t, S = 1, anchor = 5 -> g(t) = 5 + t.
        let g = f.time_shift(1.0, &DVector::from_element(1, 5.0));
        assert_relative_eq!(g.eval_scalar(0.0), 5.0);
        assert_relative_eq!(g.eval_scalar(0.5), 5.5);
        // shifted path starts at the anchor by construction.
        assert_relative_eq!(g.eval_scalar(0.0), 5.0);
    }

    #[test]
    fn time_shift_composes() {
        let f = PwLinearPath::new(
            vec![0.0, 0.4, 1.0, 1.7],
            vec![vec2(0.0, 1.0), vec2(0.5, -0.2), vec2(-1.0, 0.0), vec2(0.3, 0.3)],
        )
        .unwrap();
        let a1 = vec2(2.0, -1.0);
        let s1 = f.time_shift(0.4, &a1);
        let a2 = s1.eval(0.3);
        let twice = s1.time_shift(0.3, &a2);
        let once = f.time_shift(0.7, &a2);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert_relative_eq!(twice.eval(t), once.eval(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn refine_preserves_the_function() {
        let f = PwLinearPath::scalar(vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.0]).unwrap();
        let r = f.refine(&[0.25, 0.5, 1.5, 1.0]);
        for i in 0..=40 {
            let t = 2.0 * i as f64 / 40.0;
            assert_relative_eq!(r.eval_scalar(t), f.eval_scalar(t), epsilon = 1e-15);
        }
        // empty grid -> identical path
        assert_eq!(f.refine(&[]), f);
        // midpoint value of a linear segment
        let m = f.refine(&[0.5]);
        let k = m.times().iter().position(|&t| t == 0.5).unwrap();
        assert_relative_eq!(m.values()[k][0], 0.0);
    }

    #[test]
    fn csv_roundtrip() {
        let f = PwLinearPath::new(
            vec![0.0, 0.5, 1.25],
            vec![vec2(1.0, 2.0), vec2(-0.5, 0.125), vec2(3.0, -4.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = PwLinearPath::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn step_path_left_limits_are_stored() {
        let p = CadlagStepPath::new(
            vec![0.0, 1.0],
            vec![vec2(0.0, 0.0), vec2(1.0, 0.0)],
            vec![vec2(0.0, 0.0), vec2(0.5, 0.5)],
        )
        .unwrap();
        assert_eq!(p.eval(0.999), vec2(0.0, 0.0));
        assert_eq!(p.eval(1.0), vec2(1.0, 0.0));
        assert_eq!(p.left_value(1), &vec2(0.5, 0.5));
        assert_relative_eq!(p.sup_norm(1.0), 1.0);
    }
}
