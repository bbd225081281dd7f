//! Composable state constraints `c(x) ≥ 0`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::chart;
use crate::problem::StateConstraints;
use crate::scalar::Real;

/// Steps at which a term is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Where {
    /// Every step including the terminal one.
    All,
    /// Steps `0..N` only.
    Stages,
    Terminal,
}

impl Where {
    fn applies(self, terminal: bool) -> bool {
        match self {
            Where::All => true,
            Where::Stages => !terminal,
            Where::Terminal => terminal,
        }
    }
}

/// A planar point attached to the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointMap<T> {
    /// `(x[ix], x[iy])`.
    Coordinates { ix: usize, iy: usize },
    /// A point at distance `offset` along a pendulum hanging from
    /// `(x[ix], x[iz])` at angle `x[iphi]` from the downward vertical.
    Pendulum { ix: usize, iz: usize, iphi: usize, offset: T },
}

impl<T: Real> PointMap<T> {
    fn eval(&self, x: &DVector<T>) -> Vector2<T> {
        match *self {
            PointMap::Coordinates { ix, iy } => Vector2::new(x[ix], x[iy]),
            PointMap::Pendulum { ix, iz, iphi, offset } => {
                let (s, c) = x[iphi].sin_cos();
                Vector2::new(x[ix] + offset * s, x[iz] - offset * c)
            }
        }
    }

    /// 2×n Jacobian.
    fn jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        let mut j = DMatrix::zeros(2, x.len());
        match *self {
            PointMap::Coordinates { ix, iy } => {
                j[(0, ix)] = T::one();
                j[(1, iy)] = T::one();
            }
            PointMap::Pendulum { ix, iz, iphi, offset } => {
                let (s, c) = x[iphi].sin_cos();
                j[(0, ix)] = T::one();
                j[(1, iz)] = T::one();
                j[(0, iphi)] = offset * c;
                j[(1, iphi)] = offset * s;
            }
        }
        j
    }

    /// `Σ_i w_i ∇²p_i`.
    fn weighted_hessian(&self, x: &DVector<T>, w: &Vector2<T>) -> DMatrix<T> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        if let PointMap::Pendulum { iphi, offset, .. } = *self {
            let (s, c) = x[iphi].sin_cos();
            h[(iphi, iphi)] = offset * (-w[0] * s + w[1] * c);
        }
        h
    }
}

/// Keep-out disc: `‖p(x) − center‖ − radius ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc<T: Real> {
    pub point: PointMap<T>,
    pub center: Vector2<T>,
    pub radius: T,
}

/// One block of constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintTerm<T: Real> {
    Disc(Disc<T>),
    /// `x[index] − lower ≥ 0` and `upper − x[index] ≥ 0`.
    Bounds { index: usize, lower: T, upper: T },
    /// Chart-shifted angle limits `[−π + δ, π + δ]` on `x[index]`, with `δ`
    /// read from chart slot `slot`.
    AngleWindow { index: usize, slot: usize },
    /// `radius² − ‖x − center‖² ≥ 0`, with the components in `angles`
    /// compared on the circle.
    Ball { center: DVector<T>, radius: T, angles: Vec<usize> },
}

impl<T: Real> ConstraintTerm<T> {
    fn dim(&self) -> usize {
        match self {
            ConstraintTerm::Disc(_) | ConstraintTerm::Ball { .. } => 1,
            ConstraintTerm::Bounds { .. } | ConstraintTerm::AngleWindow { .. } => 2,
        }
    }

    fn eval_into(&self, x: &DVector<T>, chart: &[T], out: &mut [T]) {
        match self {
            ConstraintTerm::Disc(d) => out[0] = (d.point.eval(x) - d.center).norm() - d.radius,
            ConstraintTerm::Bounds { index, lower, upper } => {
                out[0] = x[*index] - *lower;
                out[1] = *upper - x[*index];
            }
            ConstraintTerm::AngleWindow { index, slot } => {
                let (lo, hi) = chart::window(chart.get(*slot).copied().unwrap_or_else(T::zero));
                out[0] = x[*index] - lo;
                out[1] = hi - x[*index];
            }
            ConstraintTerm::Ball { center, radius, angles } => {
                out[0] = *radius * *radius - chart::angular_residual(x, center, angles).norm_squared()
            }
        }
    }

    fn jacobian_into(&self, x: &DVector<T>, rows: &mut DMatrix<T>, r0: usize) {
        match self {
            ConstraintTerm::Disc(d) => {
                let diff = d.point.eval(x) - d.center;
                let dist = diff.norm();
                if dist > T::zero() {
                    let jp = d.point.jacobian(x);
                    let g = jp.transpose() * DVector::from_column_slice((diff / dist).as_slice());
                    rows.row_mut(r0).copy_from(&g.transpose());
                }
            }
            ConstraintTerm::Bounds { index, .. } | ConstraintTerm::AngleWindow { index, .. } => {
                rows[(r0, *index)] = T::one();
                rows[(r0 + 1, *index)] = -T::one();
            }
            ConstraintTerm::Ball { center, angles, .. } => {
                let g = chart::angular_residual(x, center, angles) * T::lit(-2.0);
                rows.row_mut(r0).copy_from(&g.transpose());
            }
        }
    }

    fn add_weighted_hessian(&self, x: &DVector<T>, w: &[T], out: &mut DMatrix<T>) {
        match self {
            ConstraintTerm::Disc(d) => {
                let diff = d.point.eval(x) - d.center;
                let dist = diff.norm();
                if dist > T::zero() {
                    let e = diff / dist;
                    let jp = d.point.jacobian(x);
                    let curv = (Matrix2::identity() - e * e.transpose()) / dist;
                    let curv = DMatrix::from_fn(2, 2, |i, j| curv[(i, j)]);
                    let h = jp.transpose() * curv * &jp + d.point.weighted_hessian(x, &e);
                    *out += h * w[0];
                }
            }
            ConstraintTerm::Bounds { .. } | ConstraintTerm::AngleWindow { .. } => {}
            ConstraintTerm::Ball { .. } => {
                let n = x.len();
                for i in 0..n {
                    out[(i, i)] -= T::lit(2.0) * w[0];
                }
            }
        }
    }
}

/// Ordered collection of constraint terms with per-term step masks.
#[derive(Debug, Clone, Default)]
pub struct ConstraintStack<T: Real> {
    terms: Vec<(ConstraintTerm<T>, Where)>,
}

impl<T: Real> ConstraintStack<T> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn with(mut self, term: ConstraintTerm<T>, at: Where) -> Self {
        self.terms.push((term, at));
        self
    }

    pub fn push(&mut self, term: ConstraintTerm<T>, at: Where) {
        self.terms.push((term, at));
    }

    pub fn terms(&self) -> impl Iterator<Item = &ConstraintTerm<T>> {
        self.terms.iter().map(|(t, _)| t)
    }

    fn active(&self, terminal: bool) -> impl Iterator<Item = &ConstraintTerm<T>> {
        self.terms.iter().filter(move |(_, w)| w.applies(terminal)).map(|(t, _)| t)
    }
}

impl<T: Real> StateConstraints<T> for ConstraintStack<T> {
    fn dim(&self, _k: usize, terminal: bool) -> usize {
        self.active(terminal).map(|t| t.dim()).sum()
    }

    fn eval(&self, k: usize, terminal: bool, x: &DVector<T>, chart: &[T]) -> DVector<T> {
        let mut out = DVector::zeros(self.dim(k, terminal));
        let mut r = 0;
        for t in self.active(terminal) {
            let d = t.dim();
            t.eval_into(x, chart, &mut out.as_mut_slice()[r..r + d]);
            r += d;
        }
        out
    }

    fn jacobian(&self, k: usize, terminal: bool, x: &DVector<T>, _chart: &[T]) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.dim(k, terminal), x.len());
        let mut r = 0;
        for t in self.active(terminal) {
            t.jacobian_into(x, &mut out, r);
            r += t.dim();
        }
        out
    }

    fn weighted_hessian(&self, _k: usize, terminal: bool, x: &DVector<T>, w: &DVector<T>, _chart: &[T]) -> DMatrix<T> {
        let mut out = DMatrix::zeros(x.len(), x.len());
        let mut r = 0;
        for t in self.active(terminal) {
            let d = t.dim();
            t.add_weighted_hessian(x, &w.as_slice()[r..r + d], &mut out);
            r += d;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_stack() -> ConstraintStack<f64> {
        ConstraintStack::new()
            .with(
                ConstraintTerm::Disc(Disc {
                    point: PointMap::Coordinates { ix: 0, iy: 1 },
                    center: Vector2::new(1.0, 2.0),
                    radius: 0.5,
                }),
                Where::All,
            )
            .with(
                ConstraintTerm::Disc(Disc {
                    point: PointMap::Pendulum { ix: 0, iz: 1, iphi: 3, offset: 0.4 },
                    center: Vector2::new(-1.0, 0.5),
                    radius: 0.3,
                }),
                Where::All,
            )
            .with(ConstraintTerm::Bounds { index: 2, lower: -1.0, upper: 2.0 }, Where::Stages)
            .with(ConstraintTerm::AngleWindow { index: 3, slot: 0 }, Where::All)
            .with(ConstraintTerm::Ball { center: DVector::from_vec(vec![0.5, 0.1, 0.0, 0.2]), radius: 0.2, angles: vec![] }, Where::Terminal)
    }

    #[test]
    fn clearance_equals_geometric_distance() {
        let stack = sample_stack();
        let x = DVector::from_vec(vec![4.0, 6.0, 0.0, 0.0]);
        let c = stack.eval(0, false, &x, &[0.0]);
        // distance from (4, 6) to (1, 2) is 5
        assert!((c[0] - 4.5).abs() < 1e-14);
    }

    #[test]
    fn row_counts_follow_masks() {
        let stack = sample_stack();
        assert_eq!(stack.dim(0, false), 1 + 1 + 2 + 2);
        assert_eq!(stack.dim(5, true), 1 + 1 + 2 + 1);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let stack = sample_stack();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let chart = [rng.random_range(-1.0..1.0)];
            for terminal in [false, true] {
                let d = stack.dim(0, terminal);
                let w = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let jac = stack.jacobian(0, terminal, &x, &chart);
                let hess = stack.weighted_hessian(0, terminal, &x, &w, &chart);
                let h = 1e-6;
                for i in 0..4 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (stack.eval(0, terminal, &xp, &chart) - stack.eval(0, terminal, &xm, &chart)) / (2.0 * h);
                    let err = (fd - jac.column(i)).amax();
                    assert!(err < 1e-5 * (1.0 + jac.amax()), "jacobian column {i}: {err}");
                    let gp = stack.jacobian(0, terminal, &xp, &chart).transpose() * &w;
                    let gm = stack.jacobian(0, terminal, &xm, &chart).transpose() * &w;
                    let fd_h = (gp - gm) / (2.0 * h);
                    let err = (fd_h - hess.column(i)).amax();
                    assert!(err < 1e-5 * (1.0 + hess.amax()), "hessian column {i}: {err}");
                }
            }
        }
    }
}
