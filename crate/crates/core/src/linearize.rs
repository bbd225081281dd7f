//! QP sub-problem data at the current iterate.
//!
//! The sub-problem is posed over perturbations `(δx, δu)` with `δx_0 = 0`:
//!
//! ```text
//! min  Σ_k q_kᵀδx_k + r_kᵀδu_k + ½[δx_k;δu_k]ᵀ Z_k [δx_k;δu_k]  +  q_Nᵀδx_N + ½δx_NᵀZ_Nδx_N
//! s.t. δx_{k+1} = A_k δx_k + B_k δu_k
//!      c_k^x + J_k^x δx_k ≥ 0,   c_k^u + J_k^u δu_k ≥ 0
//! ```
//!
//! `Z_k` is the Hessian of the Hamiltonian `Ĥ_k = l_k − y_kᵀc_k + ν̂_{k+1}ᵀf`,
//! with `ν̂` from the backward adjoint recursion, projected onto the PSD cone.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{Iterate, KktResiduals, ProblemSpec};
use crate::qp::{OcpQp, OcpStage, OcpTerminal};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Includes the dynamics curvature `ν̂_{k+1}ᵀ∇²f`.
    Full,
    /// Drops the dynamics curvature.
    GaussNewton,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearizeOptions<T> {
    pub mode: HessianMode,
    pub eps_psd: T,
    /// When false only first-order data is assembled and `Z_k` is left zero.
    pub second_order: bool,
}

impl<T: Real> LinearizeOptions<T> {
    pub fn new(mode: HessianMode) -> Self {
        Self { mode, eps_psd: T::lit(1e-6), second_order: true }
    }

    pub fn first_order() -> Self {
        Self { mode: HessianMode::GaussNewton, eps_psd: T::lit(1e-6), second_order: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageData<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub q: DVector<T>,
    pub r: DVector<T>,
    /// Projected `Z_k` over `(δx, δu)`.
    pub hessian: DMatrix<T>,
    pub cx: DVector<T>,
    pub jx: DMatrix<T>,
    pub cu: DVector<T>,
    pub ju: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData<T: Real> {
    pub q: DVector<T>,
    pub hessian: DMatrix<T>,
    pub cx: DVector<T>,
    pub jx: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpData<T: Real> {
    pub stages: Vec<StageData<T>>,
    pub terminal: TerminalData<T>,
    /// `ν̂_0 … ν̂_N`.
    pub adjoint: Vec<DVector<T>>,
    /// `∇_{u_k} Ĥ_k`, the reduced Lagrangian gradient.
    pub hamiltonian_grad: Vec<DVector<T>>,
    pub mode: HessianMode,
}

impl<T: Real> QpData<T> {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
    pub fn state_dim(&self) -> usize {
        self.terminal.q.len()
    }
    pub fn control_dim(&self) -> usize {
        self.stages[0].r.len()
    }

    /// Split of the stacked dual `y_k` into `(y^x, y^u)`.
    pub fn split_dual(&self, k: usize, y: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let rx = if k == self.horizon() { self.terminal.cx.len() } else { self.stages[k].cx.len() };
        (y.rows(0, rx).into_owned(), y.rows(rx, y.len() - rx).into_owned())
    }

    /// Stacked `c_k` as seen by the QP.
    pub fn stacked_constraints(&self, k: usize) -> DVector<T> {
        if k == self.horizon() {
            self.terminal.cx.clone()
        } else {
            crate::problem::stack(&self.stages[k].cx, &self.stages[k].cu)
        }
    }

    /// Reduced gradient pairing `gᵀδ = Σ q_kᵀδx_k + r_kᵀδu_k + q_Nᵀδx_N`.
    pub fn gradient_dot(&self, dx: &[DVector<T>], du: &[DVector<T>]) -> T {
        let run = self
            .stages
            .iter()
            .enumerate()
            .fold(T::zero(), |a, (k, s)| a + s.q.dot(&dx[k]) + s.r.dot(&du[k]));
        run + self.terminal.q.dot(&dx[self.horizon()])
    }

    /// Curvature `Σ [δx;δu]ᵀZ_k[δx;δu] + δx_NᵀZ_Nδx_N` (no ½).
    pub fn curvature(&self, dx: &[DVector<T>], du: &[DVector<T>]) -> T {
        let run = self.stages.iter().enumerate().fold(T::zero(), |a, (k, s)| {
            let v = crate::problem::stack(&dx[k], &du[k]);
            a + v.dot(&(&s.hessian * &v))
        });
        let xn = &dx[self.horizon()];
        run + xn.dot(&(&self.terminal.hessian * xn))
    }

    /// Full-horizon sub-problem (`δx_0 = 0`).
    pub fn full_qp(&self) -> OcpQp<T> {
        self.tail_qp(0, DVector::zeros(self.state_dim()))
    }

    /// Tail sub-problem over `δu_k … δu_{N−1}` starting from `δx_k = dx`.
    pub fn tail_qp(&self, k: usize, dx: DVector<T>) -> OcpQp<T> {
        let stages = self.stages[k..]
            .iter()
            .map(|s| OcpStage {
                a: s.a.clone(),
                b: s.b.clone(),
                hess: s.hessian.clone(),
                qx: s.q.clone(),
                qu: s.r.clone(),
                gx: -&s.jx,
                hx: s.cx.clone(),
                gu: -&s.ju,
                hu: s.cu.clone(),
            })
            .collect();
        OcpQp {
            x_init: dx,
            stages,
            terminal: OcpTerminal {
                hess: self.terminal.hessian.clone(),
                qx: self.terminal.q.clone(),
                gx: -&self.terminal.jx,
                hx: self.terminal.cx.clone(),
            },
        }
    }
}

/// Tail QP `P_k(δx)`; see [`QpData::tail_qp`].
pub fn build_tail_qp<T: Real>(data: &QpData<T>, k: usize, dx: &DVector<T>) -> OcpQp<T> {
    data.tail_qp(k, dx.clone())
}

struct FirstOrder<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    grad: DVector<T>,
    hess: DMatrix<T>,
    cx: DVector<T>,
    jx: DMatrix<T>,
}

fn all_finite<T: Real>(slices: &[&[T]]) -> bool {
    slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
}

/// Assembles [`QpData`] at `iterate`.
pub fn build_qp_data<T: Real>(
    spec: &ProblemSpec<T>,
    iterate: &Iterate<T>,
    opts: &LinearizeOptions<T>,
) -> Result<QpData<T>> {
    let nh = spec.horizon();
    let n = spec.state_dim();
    let m = spec.control_dim();
    if iterate.x.len() != nh + 1 || iterate.u.len() != nh || iterate.y.len() != nh + 1 {
        return Err(Error::Dimension("iterate does not match the horizon".into()));
    }
    for k in 0..=nh {
        if iterate.y[k].len() != spec.stacked_rows(k) {
            return Err(Error::Dimension(format!("dual at step {k} has wrong length")));
        }
    }
    let dynamics = spec.dynamics();
    let objective = spec.objective();
    let ju = spec.control_jacobian();

    let first: Vec<FirstOrder<T>> = (0..nh)
        .into_par_iter()
        .map(|k| {
            let (x, u) = (&iterate.x[k], &iterate.u[k]);
            let (a, b) = dynamics.jacobians(k, x, u);
            let (grad, hess) = objective.stage_expansion(k, x, u);
            let cx = spec.state_constraint_values(k, x);
            let jx = spec.state_constraint_jacobian(k, x);
            if !all_finite(&[a.as_slice(), b.as_slice(), grad.as_slice(), hess.as_slice(), cx.as_slice(), jx.as_slice()]) {
                return Err(Error::NonFiniteDerivative { step: k });
            }
            Ok(FirstOrder { a, b, grad, hess, cx, jx })
        })
        .collect::<Result<_>>()?;

    let xn = &iterate.x[nh];
    let (qn, hn) = objective.terminal_expansion(xn);
    let cxn = spec.state_constraint_values(nh, xn);
    let jxn = spec.state_constraint_jacobian(nh, xn);
    if !all_finite(&[qn.as_slice(), hn.as_slice(), cxn.as_slice(), jxn.as_slice()]) {
        return Err(Error::NonFiniteDerivative { step: nh });
    }

    // adjoint recursion
    let mut adjoint = vec![DVector::zeros(n); nh + 1];
    let yxn = iterate.y[nh].rows(0, cxn.len());
    adjoint[nh] = &qn - jxn.tr_mul(&yxn);
    for k in (0..nh).rev() {
        let f = &first[k];
        let rx = f.cx.len();
        let yx = iterate.y[k].rows(0, rx);
        adjoint[k] = f.grad.rows(0, n) - f.jx.tr_mul(&yx) + f.a.tr_mul(&adjoint[k + 1]);
    }

    let hamiltonian_grad: Vec<DVector<T>> = (0..nh)
        .map(|k| {
            let f = &first[k];
            let rx = f.cx.len();
            let yu = iterate.y[k].rows(rx, iterate.y[k].len() - rx);
            f.grad.rows(n, m) - ju.tr_mul(&yu) + f.b.tr_mul(&adjoint[k + 1])
        })
        .collect();

    let stages: Vec<StageData<T>> = first
        .into_par_iter()
        .enumerate()
        .map(|(k, f)| {
            let (x, u) = (&iterate.x[k], &iterate.u[k]);
            let hessian = if opts.second_order {
                let rx = f.cx.len();
                let yx = iterate.y[k].rows(0, rx).into_owned();
                let mut z = f.hess.clone();
                let hc = spec.state_constraint_hessian(k, x, &yx);
                z.view_mut((0, 0), (n, n)).add_assign(&(-hc));
                if opts.mode == HessianMode::Full {
                    z += dynamics.weighted_hessian(k, x, u, &adjoint[k + 1]);
                }
                if !all_finite(&[z.as_slice()]) {
                    return Err(Error::NonFiniteDerivative { step: k });
                }
                project_psd(&symmetrize(&z), opts.eps_psd)?
            } else {
                DMatrix::zeros(n + m, n + m)
            };
            Ok(StageData {
                a: f.a,
                b: f.b,
                q: f.grad.rows(0, n).into_owned(),
                r: f.grad.rows(n, m).into_owned(),
                hessian,
                cx: f.cx,
                jx: f.jx,
                cu: spec.control_constraints(u),
                ju: ju.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let terminal_hessian = if opts.second_order {
        let yxn = iterate.y[nh].rows(0, cxn.len()).into_owned();
        let z = &hn - spec.state_constraint_hessian(nh, xn, &yxn);
        project_psd(&symmetrize(&z), opts.eps_psd)?
    } else {
        DMatrix::zeros(n, n)
    };

    Ok(QpData {
        stages,
        terminal: TerminalData { q: qn, hessian: terminal_hessian, cx: cxn, jx: jxn },
        adjoint,
        hamiltonian_grad,
        mode: opts.mode,
    })
}

fn symmetrize<T: Real>(z: &DMatrix<T>) -> DMatrix<T> {
    (z + z.transpose()) * T::lit(0.5)
}

/// Eigenvalue clamp onto `{Z : λ_min(Z) ≥ ε}`, the Frobenius-nearest such
/// matrix.
pub fn project_psd<T: Real>(z: &DMatrix<T>, eps: T) -> Result<DMatrix<T>> {
    if !z.is_square() {
        return Err(Error::Dimension("project_psd needs a square matrix".into()));
    }
    let tol = T::lit(1e-10) * (T::one() + z.amax());
    if z.iter().zip(z.transpose().iter()).any(|(a, b)| (*a - *b).abs() > tol) {
        return Err(Error::NotSymmetric);
    }
    if z.nrows() == 0 {
        return Ok(z.clone());
    }
    let eig = symmetrize(z).symmetric_eigen();
    if eig.eigenvalues.iter().all(|l| *l >= eps) {
        return Ok(symmetrize(z));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(eps));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    Ok(symmetrize(&out))
}

/// KKT residuals from assembled data and the current constraint values.
pub fn residuals_from<T: Real>(data: &QpData<T>, c: &[DVector<T>], y: &[DVector<T>]) -> KktResiduals<T> {
    let mut min_primal = T::lit(f64::INFINITY);
    let mut min_dual = T::lit(f64::INFINITY);
    let mut comp = T::zero();
    for (ck, yk) in c.iter().zip(y) {
        for (ci, yi) in ck.iter().zip(yk.iter()) {
            min_primal = min_primal.min(*ci);
            min_dual = min_dual.min(*yi);
            comp = comp.max((*ci * *yi).abs());
        }
    }
    if min_primal == T::lit(f64::INFINITY) {
        min_primal = T::zero();
    }
    if min_dual == T::lit(f64::INFINITY) {
        min_dual = T::zero();
    }
    let stat = data
        .hamiltonian_grad
        .iter()
        .fold(T::zero(), |a, g| if g.is_empty() { a } else { a.max(g.amax()) });
    KktResiduals { min_primal, min_dual, max_complementarity: comp, max_stationarity: stat }
}
