//! Brute-force reference computations for tests: finite-difference policy
//! Jacobians, critical-region sampling and merit slopes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::CriticalRegion;
use crate::linearize::{HessianMode, QpData, StageData, TerminalData};
use crate::qp::{QpOptions, QpStatus};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig<T> {
    /// Base step; scaled by `1 + ‖x‖`.
    pub h: T,
    /// Richardson extrapolation levels on top of the central difference.
    pub richardson: usize,
}

impl<T: Real> Default for FdConfig<T> {
    fn default() -> Self {
        Self { h: T::lit(1e-5), richardson: 1 }
    }
}

/// Central-difference Jacobian of `f` at `x`. When `f` fails at a probe the
/// step is halved, up to three times.
pub fn fd_jacobian<T: Real, F>(f: F, x: &DVector<T>, cfg: &FdConfig<T>) -> Result<DMatrix<T>>
where
    F: Fn(&DVector<T>) -> Option<DVector<T>>,
{
    let n = x.len();
    let base = cfg.h * (T::one() + x.norm());
    let mut cols: Vec<DVector<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let central = |h: T| -> Option<DVector<T>> {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            Some((f(&xp)? - f(&xm)?) / (T::lit(2.0) * h))
        };
        let mut h = base;
        let mut col = None;
        for _ in 0..4 {
            if let Some(d) = richardson(&central, h, cfg.richardson) {
                col = Some(d);
                break;
            }
            h *= T::lit(0.5);
        }
        cols.push(col.ok_or_else(|| Error::Oracle(format!("probe failed along coordinate {i}")))?);
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, n, |r, c| cols[c][r]))
}

fn richardson<T: Real>(d: &impl Fn(T) -> Option<DVector<T>>, h: T, levels: usize) -> Option<DVector<T>> {
    let mut table = vec![d(h)?];
    let mut step = h;
    for _ in 0..levels {
        step *= T::lit(0.5);
        let mut next = vec![d(step)?];
        let mut factor = T::lit(4.0);
        for prev in &table {
            let last = next.last().unwrap().clone();
            next.push((&last * factor - prev) / (factor - T::one()));
            factor *= T::lit(4.0);
        }
        table = next;
    }
    table.pop()
}

/// First control of the tail QP `P_k(δx)` (dense solve with polishing).
pub fn tail_policy<T: Real>(data: &QpData<T>, k: usize, dx: &DVector<T>) -> Option<DVector<T>> {
    let sol = data.tail_qp(k, dx.clone()).solve_dense(&QpOptions::with_tol(T::lit(1e-12))).ok()?;
    (sol.status == QpStatus::Optimal).then(|| sol.u[0].clone())
}

/// Optimal value of the tail QP `P_k(δx)`.
pub fn tail_value<T: Real>(data: &QpData<T>, k: usize, dx: &DVector<T>) -> Option<T> {
    let sol = data.tail_qp(k, dx.clone()).solve_dense(&QpOptions::with_tol(T::lit(1e-12))).ok()?;
    (sol.status == QpStatus::Optimal).then_some(sol.objective)
}

/// Central FD of the tail-QP first control with respect to `δx_k`.
pub fn fd_policy_jacobian<T: Real>(data: &QpData<T>, k: usize, dx: &DVector<T>, cfg: &FdConfig<T>) -> Result<DMatrix<T>> {
    fd_jacobian(|p| tail_policy(data, k, p), dx, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSamples<T: Real> {
    pub points: Vec<DVector<T>>,
    pub acceptance: f64,
    pub radius: T,
}

/// Rejection sampling of `{G δx ≤ h} ∩ B(center, radius)`. The radius is
/// shrunk tenfold (up to three times) while acceptance stays below 1%.
pub fn sample_critical_region<T: Real, R: Rng>(
    region: &CriticalRegion<T>,
    center: &DVector<T>,
    n_samples: usize,
    radius: T,
    tol: T,
    rng: &mut R,
) -> Result<RegionSamples<T>> {
    if !region.contains(center, tol) {
        return Err(Error::Oracle("sampling centre lies outside the region".into()));
    }
    let n = center.len();
    let mut radius = radius;
    for _ in 0..4 {
        let mut points = Vec::with_capacity(n_samples);
        let mut tries = 0usize;
        let budget = 200 * n_samples.max(1);
        while points.len() < n_samples && tries < budget {
            let dir = DVector::from_fn(n, |_, _| T::lit(rng.random_range(-1.0..1.0)));
            if dir.norm() > T::one() {
                continue;
            }
            tries += 1;
            let p = center + dir * radius;
            if region.contains(&p, tol) {
                points.push(p);
            }
        }
        let acceptance = points.len() as f64 / tries as f64;
        if points.len() == n_samples && acceptance >= 0.01 {
            return Ok(RegionSamples { points, acceptance, radius });
        }
        radius *= T::lit(0.1);
    }
    Err(Error::Oracle("critical region too thin to sample".into()))
}

/// Random box-constrained LQ sub-problem: `|δu_i| ≤ u_box` at every step
/// and `|δx_i| ≤ x_box` at steps `1..=N`, strictly convex stage costs and
/// linear terms large enough to push the solution onto some of the bounds.
pub fn random_box_lq<T: Real, R: Rng>(rng: &mut R, n: usize, m: usize, horizon: usize, u_box: T, x_box: T) -> QpData<T> {
    let mut normal = |scale: f64| T::lit(scale * (rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5));
    let psd = |dim: usize, normal: &mut dyn FnMut(f64) -> T| {
        let l = DMatrix::from_fn(dim, dim, |_, _| normal(0.5));
        &l * l.transpose() + DMatrix::identity(dim, dim) * T::lit(0.2)
    };
    let boxed = |dim: usize, width: T| {
        let mut j = DMatrix::zeros(2 * dim, dim);
        for i in 0..dim {
            j[(2 * i, i)] = T::one();
            j[(2 * i + 1, i)] = -T::one();
        }
        (DVector::from_element(2 * dim, width), j)
    };
    let mut stages = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let a = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| normal(0.15));
        let b = DMatrix::from_fn(n, m, |_, _| normal(0.8));
        let hessian = psd(n + m, &mut normal);
        let (cx, jx) = if k == 0 { (DVector::zeros(0), DMatrix::zeros(0, n)) } else { boxed(n, x_box) };
        let (cu, ju) = boxed(m, u_box);
        stages.push(StageData {
            a,
            b,
            q: DVector::from_fn(n, |_, _| normal(2.0)),
            r: DVector::from_fn(m, |_, _| normal(2.0)),
            hessian,
            cx,
            jx,
            cu,
            ju,
        });
    }
    let (cx, jx) = boxed(n, x_box);
    let terminal = TerminalData { q: DVector::from_fn(n, |_, _| normal(2.0)), hessian: psd(n, &mut normal), cx, jx };
    QpData {
        stages,
        terminal,
        adjoint: vec![DVector::zeros(n); horizon + 1],
        hamiltonian_grad: vec![DVector::zeros(m); horizon],
        mode: HessianMode::Full,
    }
}

/// One-sided second-order difference of `φ` at `0⁺`:
/// `(−3φ(0) + 4φ(h) − φ(2h)) / 2h`.
pub fn fd_merit_derivative<T: Real, F: Fn(T) -> T>(phi: F, h: T) -> T {
    (T::lit(-3.0) * phi(T::zero()) + T::lit(4.0) * phi(h) - phi(T::lit(2.0) * h)) / (T::lit(2.0) * h)
}
