//! Stage-wise optimal-control QPs.
//!
//! ```text
//! min  Σ_j ½[x_j;u_j]ᵀ H_j [x_j;u_j] + qx_jᵀx_j + qu_jᵀu_j  +  ½x_NᵀH_N x_N + qx_Nᵀx_N
//! s.t. x_{j+1} = A_j x_j + B_j u_j,   x_0 = x_init
//!      gx_j x_j ≤ hx_j  (j ≥ 1),   gu_j u_j ≤ hu_j,   gx_N x_N ≤ hx_N
//! ```
//!
//! The initial state is fixed, so state rows at `j = 0` are constants and are
//! left out of the solve (their duals are reported as zero).
//!
//! Decision vector layout: `z = [u_0, x_1, u_1, x_2, …, u_{N−1}, x_N]`.

use std::ops::AddAssign;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::dense::robust_cholesky;
use super::ipm::{mehrotra, KktSystem};
use super::{solve_qp, QpInstance, QpOptions, QpStatus};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct OcpStage<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    /// Hessian over the stacked `(x, u)`.
    pub hess: DMatrix<T>,
    pub qx: DVector<T>,
    pub qu: DVector<T>,
    pub gx: DMatrix<T>,
    pub hx: DVector<T>,
    pub gu: DMatrix<T>,
    pub hu: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpTerminal<T: Real> {
    pub hess: DMatrix<T>,
    pub qx: DVector<T>,
    pub gx: DMatrix<T>,
    pub hx: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpQp<T: Real> {
    pub x_init: DVector<T>,
    pub stages: Vec<OcpStage<T>>,
    pub terminal: OcpTerminal<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution<T: Real> {
    /// `x_0 … x_N`, with `x_0 = x_init`.
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    /// State-row duals per step `0..=N` (zeros at step 0).
    pub lam_x: Vec<DVector<T>>,
    pub lam_u: Vec<DVector<T>>,
    /// Dynamics multipliers (sign as in `H z + Aᵀν + Gᵀλ = −g`).
    pub nu: Vec<DVector<T>>,
    pub objective: T,
    pub status: QpStatus,
    pub kkt_error: T,
    pub iterations: usize,
}

impl<T: Real> OcpQp<T> {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
    pub fn state_dim(&self) -> usize {
        self.x_init.len()
    }
    pub fn control_dim(&self) -> usize {
        self.stages.first().map_or(0, |s| s.b.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.control_dim();
        if self.stages.is_empty() {
            return Err(Error::IllPosedQp("empty horizon".into()));
        }
        for (j, s) in self.stages.iter().enumerate() {
            let ok = s.a.shape() == (n, n)
                && s.b.shape() == (n, m)
                && s.hess.shape() == (n + m, n + m)
                && s.qx.len() == n
                && s.qu.len() == m
                && s.gx.ncols() == n
                && s.gx.nrows() == s.hx.len()
                && s.gu.ncols() == m
                && s.gu.nrows() == s.hu.len();
            if !ok {
                return Err(Error::IllPosedQp(format!("stage {j} has inconsistent dimensions")));
            }
            let all = [
                s.a.as_slice(),
                s.b.as_slice(),
                s.hess.as_slice(),
                s.qx.as_slice(),
                s.qu.as_slice(),
                s.gx.as_slice(),
                s.hx.as_slice(),
                s.gu.as_slice(),
                s.hu.as_slice(),
            ];
            if all.iter().any(|v| v.iter().any(|e| !e.is_finite())) {
                return Err(Error::IllPosedQp(format!("stage {j} has non-finite data")));
            }
        }
        let t = &self.terminal;
        if t.hess.shape() != (n, n) || t.qx.len() != n || t.gx.ncols() != n || t.gx.nrows() != t.hx.len() {
            return Err(Error::IllPosedQp("terminal block has inconsistent dimensions".into()));
        }
        if self.x_init.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllPosedQp("non-finite initial state".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let n = self.state_dim();
        let m = self.control_dim();
        let nh = self.horizon();
        let mut ineq = Vec::with_capacity(nh + 1);
        let mut off = 0;
        for (j, s) in self.stages.iter().enumerate() {
            let rx = if j == 0 { 0 } else { s.hx.len() };
            ineq.push((off, rx, off + rx, s.hu.len()));
            off += rx + s.hu.len();
        }
        ineq.push((off, self.terminal.hx.len(), off + self.terminal.hx.len(), 0));
        off += self.terminal.hx.len();
        Layout { n, m, nh, ineq, n_ineq: off }
    }

    /// Objective value of a state/control trajectory.
    pub fn objective(&self, x: &[DVector<T>], u: &[DVector<T>]) -> T {
        let half = T::lit(0.5);
        let mut v = T::zero();
        for (j, s) in self.stages.iter().enumerate() {
            let xu = stack(&x[j], &u[j]);
            v += half * xu.dot(&(&s.hess * &xu)) + s.qx.dot(&x[j]) + s.qu.dot(&u[j]);
        }
        let xn = &x[self.horizon()];
        v + half * xn.dot(&(&self.terminal.hess * xn)) + self.terminal.qx.dot(xn)
    }

    /// Rolls the linear dynamics forward from `x_init`.
    pub fn rollout(&self, u: &[DVector<T>]) -> Vec<DVector<T>> {
        let mut x = vec![self.x_init.clone()];
        for (j, s) in self.stages.iter().enumerate() {
            let next = &s.a * &x[j] + &s.b * &u[j];
            x.push(next);
        }
        x
    }

    /// Interior point solve with the Riccati-factored KKT system.
    pub fn solve(&self, opts: &QpOptions<T>) -> Result<OcpSolution<T>> {
        self.validate()?;
        let mut sys = RiccatiKkt::new(self);
        let res = mehrotra(&mut sys, opts, None)?;
        Ok(self.unpack(&res.z, &res.nu, &res.lambda, res.status, res.kkt_error, res.iterations))
    }

    /// Point on the central path with `s ∘ λ = μ`.
    pub fn central_point(&self, mu: T, tol: T) -> Result<OcpSolution<T>> {
        let opts = QpOptions { tol, max_iter: 200, polish: false, target_mu: Some(mu) };
        self.solve(&opts)
    }

    /// Dense solve with active-set polishing. Exact up to round-off on
    /// non-degenerate instances; meant for small problems and oracles.
    pub fn solve_dense(&self, opts: &QpOptions<T>) -> Result<OcpSolution<T>> {
        self.validate()?;
        let inst = self.to_dense();
        let sol = solve_qp(&inst, opts, None)?;
        Ok(self.unpack(&sol.z, &sol.lambda_eq, &sol.lambda_ineq, sol.status, sol.kkt_error, sol.iterations))
    }

    /// Dense instance over `z` (the constant objective term is dropped).
    pub fn to_dense(&self) -> QpInstance<T> {
        let lay = self.layout();
        let (n, m, nh) = (lay.n, lay.m, lay.nh);
        let nv = nh * (n + m);
        let mut h = DMatrix::zeros(nv, nv);
        let mut a = DMatrix::zeros(nh * n, nv);
        let mut gi = DMatrix::zeros(lay.n_ineq, nv);
        for (j, s) in self.stages.iter().enumerate() {
            let uo = lay.u_off(j);
            let xo = if j > 0 { lay.x_off(j) } else { 0 };
            h.view_mut((uo, uo), (m, m)).copy_from(&s.hess.view((n, n), (m, m)));
            if j > 0 {
                h.view_mut((xo, xo), (n, n)).copy_from(&s.hess.view((0, 0), (n, n)));
                h.view_mut((xo, uo), (n, m)).copy_from(&s.hess.view((0, n), (n, m)));
                h.view_mut((uo, xo), (m, n)).copy_from(&s.hess.view((n, 0), (m, n)));
                a.view_mut((j * n, xo), (n, n)).copy_from(&(-&s.a));
            }
            a.view_mut((j * n, uo), (n, m)).copy_from(&(-&s.b));
            a.view_mut((j * n, lay.x_off(j + 1)), (n, n)).fill_with_identity();
            let (ox, rx, ou, ru) = lay.ineq[j];
            if rx > 0 {
                gi.view_mut((ox, xo), (rx, n)).copy_from(&s.gx);
            }
            gi.view_mut((ou, uo), (ru, m)).copy_from(&s.gu);
        }
        let xo = lay.x_off(nh);
        h.view_mut((xo, xo), (n, n)).copy_from(&self.terminal.hess);
        let (ox, rx, _, _) = lay.ineq[nh];
        gi.view_mut((ox, xo), (rx, n)).copy_from(&self.terminal.gx);
        QpInstance {
            h_mat: h,
            g: self.linear_term(&lay),
            a_eq: a,
            b_eq: self.eq_rhs(&lay),
            g_ineq: gi,
            h_ineq: self.ineq_rhs(&lay),
        }
    }

    fn linear_term(&self, lay: &Layout) -> DVector<T> {
        let (n, m) = (lay.n, lay.m);
        let mut g = DVector::zeros(lay.nh * (n + m));
        for (j, s) in self.stages.iter().enumerate() {
            let mut gu = s.qu.clone();
            if j == 0 {
                gu += s.hess.view((n, 0), (m, n)) * &self.x_init;
            } else {
                g.rows_mut(lay.x_off(j), n).copy_from(&s.qx);
            }
            g.rows_mut(lay.u_off(j), m).copy_from(&gu);
        }
        g.rows_mut(lay.x_off(lay.nh), n).copy_from(&self.terminal.qx);
        g
    }

    fn eq_rhs(&self, lay: &Layout) -> DVector<T> {
        let mut b = DVector::zeros(lay.nh * lay.n);
        b.rows_mut(0, lay.n).copy_from(&(&self.stages[0].a * &self.x_init));
        b
    }

    fn ineq_rhs(&self, lay: &Layout) -> DVector<T> {
        let mut h = DVector::zeros(lay.n_ineq);
        for (j, s) in self.stages.iter().enumerate() {
            let (ox, rx, ou, ru) = lay.ineq[j];
            if rx > 0 {
                h.rows_mut(ox, rx).copy_from(&s.hx);
            }
            h.rows_mut(ou, ru).copy_from(&s.hu);
        }
        let (ox, rx, _, _) = lay.ineq[lay.nh];
        h.rows_mut(ox, rx).copy_from(&self.terminal.hx);
        h
    }

    fn unpack(
        &self,
        z: &DVector<T>,
        nu: &DVector<T>,
        lam: &DVector<T>,
        status: QpStatus,
        kkt_error: T,
        iterations: usize,
    ) -> OcpSolution<T> {
        let lay = self.layout();
        let (n, m, nh) = (lay.n, lay.m, lay.nh);
        let mut x = vec![self.x_init.clone()];
        let mut u = Vec::with_capacity(nh);
        let mut lam_x = Vec::with_capacity(nh + 1);
        let mut lam_u = Vec::with_capacity(nh);
        let mut nus = Vec::with_capacity(nh);
        for j in 0..nh {
            u.push(z.rows(lay.u_off(j), m).into_owned());
            x.push(z.rows(lay.x_off(j + 1), n).into_owned());
            let (ox, rx, ou, ru) = lay.ineq[j];
            lam_x.push(if j == 0 {
                DVector::zeros(self.stages[0].hx.len())
            } else {
                lam.rows(ox, rx).into_owned()
            });
            lam_u.push(lam.rows(ou, ru).into_owned());
            nus.push(nu.rows(j * n, n).into_owned());
        }
        let (ox, rx, _, _) = lay.ineq[nh];
        lam_x.push(lam.rows(ox, rx).into_owned());
        let objective = self.objective(&x, &u);
        OcpSolution { x, u, lam_x, lam_u, nu: nus, objective, status, kkt_error, iterations }
    }
}

struct Layout {
    n: usize,
    m: usize,
    nh: usize,
    /// Per step: (state-row offset, state rows, control-row offset, control rows).
    ineq: Vec<(usize, usize, usize, usize)>,
    n_ineq: usize,
}

impl Layout {
    fn u_off(&self, j: usize) -> usize {
        j * (self.n + self.m)
    }
    /// Offset of `x_j` for `j ≥ 1`.
    fn x_off(&self, j: usize) -> usize {
        (j - 1) * (self.n + self.m) + self.m
    }
}

fn stack<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    crate::problem::stack(a, b)
}

struct StageFactor<T: Real> {
    quu: Cholesky<T, Dyn>,
    qux: DMatrix<T>,
    /// Cost-to-go Hessian at step `j + 1`.
    p_next: DMatrix<T>,
}

struct RiccatiKkt<'a, T: Real> {
    qp: &'a OcpQp<T>,
    lay: Layout,
    g: DVector<T>,
    b: DVector<T>,
    h: DVector<T>,
    factors: Vec<StageFactor<T>>,
    /// Weighted terminal Hessian.
    p_terminal: DMatrix<T>,
    /// Weighted stage Hessians.
    hw: Vec<DMatrix<T>>,
}

impl<'a, T: Real> RiccatiKkt<'a, T> {
    fn new(qp: &'a OcpQp<T>) -> Self {
        let lay = qp.layout();
        let g = qp.linear_term(&lay);
        let b = qp.eq_rhs(&lay);
        let h = qp.ineq_rhs(&lay);
        Self { qp, lay, g, b, h, factors: Vec::new(), p_terminal: DMatrix::zeros(0, 0), hw: Vec::new() }
    }
}

/// `Gᵀ diag(w) G` for a row block.
fn weighted_gram<T: Real>(g: &DMatrix<T>, w: &[T]) -> DMatrix<T> {
    let mut wg = g.clone();
    for (i, mut row) in wg.row_iter_mut().enumerate() {
        row *= w[i];
    }
    g.tr_mul(&wg)
}

impl<T: Real> KktSystem<T> for RiccatiKkt<'_, T> {
    fn n_var(&self) -> usize {
        self.g.len()
    }
    fn n_eq(&self) -> usize {
        self.b.len()
    }
    fn n_ineq(&self) -> usize {
        self.h.len()
    }
    fn linear(&self) -> &DVector<T> {
        &self.g
    }
    fn eq_rhs(&self) -> &DVector<T> {
        &self.b
    }
    fn ineq_rhs(&self) -> &DVector<T> {
        &self.h
    }

    fn hess_mul(&self, z: &DVector<T>) -> DVector<T> {
        let lay = &self.lay;
        let (n, m) = (lay.n, lay.m);
        let mut out = DVector::zeros(z.len());
        for (j, s) in self.qp.stages.iter().enumerate() {
            let uo = lay.u_off(j);
            let u = z.rows(uo, m);
            if j == 0 {
                let r = s.hess.view((n, n), (m, m)) * u;
                out.rows_mut(uo, m).copy_from(&r);
            } else {
                let xo = lay.x_off(j);
                let x = z.rows(xo, n);
                let rx = s.hess.view((0, 0), (n, n)) * x + s.hess.view((0, n), (n, m)) * u;
                let ru = s.hess.view((n, 0), (m, n)) * x + s.hess.view((n, n), (m, m)) * u;
                out.rows_mut(xo, n).add_assign(&rx);
                out.rows_mut(uo, m).copy_from(&ru);
            }
        }
        let xo = lay.x_off(lay.nh);
        let r = &self.qp.terminal.hess * z.rows(xo, n);
        out.rows_mut(xo, n).copy_from(&r);
        out
    }

    fn eq_mul(&self, z: &DVector<T>) -> DVector<T> {
        let lay = &self.lay;
        let n = lay.n;
        let mut out = DVector::zeros(lay.nh * n);
        for (j, s) in self.qp.stages.iter().enumerate() {
            let mut r = z.rows(lay.x_off(j + 1), n) - &s.b * z.rows(lay.u_off(j), lay.m);
            if j > 0 {
                r -= &s.a * z.rows(lay.x_off(j), n);
            }
            out.rows_mut(j * n, n).copy_from(&r);
        }
        out
    }

    fn eq_tmul(&self, nu: &DVector<T>) -> DVector<T> {
        let lay = &self.lay;
        let n = lay.n;
        let mut out = DVector::zeros(self.g.len());
        for (j, s) in self.qp.stages.iter().enumerate() {
            let v = nu.rows(j * n, n);
            out.rows_mut(lay.x_off(j + 1), n).add_assign(&v);
            out.rows_mut(lay.u_off(j), lay.m).add_assign(&(-s.b.tr_mul(&v)));
            if j > 0 {
                out.rows_mut(lay.x_off(j), n).add_assign(&(-s.a.tr_mul(&v)));
            }
        }
        out
    }

    fn ineq_mul(&self, z: &DVector<T>) -> DVector<T> {
        let lay = &self.lay;
        let mut out = DVector::zeros(lay.n_ineq);
        for (j, s) in self.qp.stages.iter().enumerate() {
            let (ox, rx, ou, ru) = lay.ineq[j];
            if rx > 0 {
                out.rows_mut(ox, rx).copy_from(&(&s.gx * z.rows(lay.x_off(j), lay.n)));
            }
            out.rows_mut(ou, ru).copy_from(&(&s.gu * z.rows(lay.u_off(j), lay.m)));
        }
        let (ox, rx, _, _) = lay.ineq[lay.nh];
        out.rows_mut(ox, rx)
            .copy_from(&(&self.qp.terminal.gx * z.rows(lay.x_off(lay.nh), lay.n)));
        out
    }

    fn ineq_tmul(&self, lam: &DVector<T>) -> DVector<T> {
        let lay = &self.lay;
        let mut out = DVector::zeros(self.g.len());
        for (j, s) in self.qp.stages.iter().enumerate() {
            let (ox, rx, ou, ru) = lay.ineq[j];
            if rx > 0 {
                out.rows_mut(lay.x_off(j), lay.n).add_assign(&s.gx.tr_mul(&lam.rows(ox, rx)));
            }
            out.rows_mut(lay.u_off(j), lay.m).add_assign(&s.gu.tr_mul(&lam.rows(ou, ru)));
        }
        let (ox, rx, _, _) = lay.ineq[lay.nh];
        out.rows_mut(lay.x_off(lay.nh), lay.n)
            .add_assign(&self.qp.terminal.gx.tr_mul(&lam.rows(ox, rx)));
        out
    }

    fn factor(&mut self, w: &DVector<T>) -> Result<()> {
        let lay = &self.lay;
        let (n, m, nh) = (lay.n, lay.m, lay.nh);
        let ws = w.as_slice();
        let (ox, rx, _, _) = lay.ineq[nh];
        let t = &self.qp.terminal;
        self.p_terminal = &t.hess + weighted_gram(&t.gx, &ws[ox..ox + rx]);

        self.hw = self
            .qp
            .stages
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let (ox, rx, ou, ru) = lay.ineq[j];
                let mut hw = s.hess.clone();
                if rx > 0 {
                    hw.view_mut((0, 0), (n, n))
                        .add_assign(&weighted_gram(&s.gx, &ws[ox..ox + rx]));
                }
                hw.view_mut((n, n), (m, m))
                    .add_assign(&weighted_gram(&s.gu, &ws[ou..ou + ru]));
                hw
            })
            .collect();

        let mut factors: Vec<StageFactor<T>> = Vec::with_capacity(nh);
        let mut p = self.p_terminal.clone();
        for j in (0..nh).rev() {
            let s = &self.qp.stages[j];
            let hw = &self.hw[j];
            let pb = &p * &s.b;
            let quu = hw.view((n, n), (m, m)) + s.b.tr_mul(&pb);
            let qux = hw.view((n, 0), (m, n)) + pb.tr_mul(&s.a);
            let chol = robust_cholesky(quu)?;
            let p_next = p.clone();
            if j > 0 {
                let qxx = hw.view((0, 0), (n, n)) + s.a.tr_mul(&(&p * &s.a));
                let k = -chol.solve(&qux);
                let pn = qxx + qux.tr_mul(&k);
                p = (&pn + pn.transpose()) * T::lit(0.5);
            }
            factors.push(StageFactor { quu: chol, qux, p_next });
        }
        factors.reverse();
        self.factors = factors;
        Ok(())
    }

    fn solve(&self, rz: &DVector<T>, re: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        let lay = &self.lay;
        let (n, m, nh) = (lay.n, lay.m, lay.nh);
        if self.factors.len() != nh {
            return Err(Error::SingularKkt);
        }
        // backward: linear cost-to-go terms
        let mut p_lin = vec![DVector::zeros(n); nh + 1];
        p_lin[nh] = -rz.rows(lay.x_off(nh), n);
        let mut d = vec![DVector::zeros(m); nh];
        for j in (0..nh).rev() {
            let s = &self.qp.stages[j];
            let f = &self.factors[j];
            let e = re.rows(j * n, n);
            let v = &f.p_next * e + &p_lin[j + 1];
            let qu = -rz.rows(lay.u_off(j), m) + s.b.tr_mul(&v);
            d[j] = -f.quu.solve(&qu);
            if j > 0 {
                let qx = -rz.rows(lay.x_off(j), n) + s.a.tr_mul(&v);
                p_lin[j] = qx + f.qux.tr_mul(&d[j]);
            }
        }
        // forward
        let mut dz = DVector::zeros(self.g.len());
        let mut dnu = DVector::zeros(nh * n);
        let mut x = DVector::zeros(n);
        for j in 0..nh {
            let s = &self.qp.stages[j];
            let f = &self.factors[j];
            let u = if j == 0 { d[0].clone() } else { -f.quu.solve(&(&f.qux * &x)) + &d[j] };
            let next = &s.a * &x + &s.b * &u + re.rows(j * n, n);
            dz.rows_mut(lay.u_off(j), m).copy_from(&u);
            dz.rows_mut(lay.x_off(j + 1), n).copy_from(&next);
            let nu = -(&f.p_next * &next + &p_lin[j + 1]);
            dnu.rows_mut(j * n, n).copy_from(&nu);
            x = next;
        }
        Ok((dz, dnu))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_ocp(rng: &mut ChaCha8Rng, n: usize, m: usize, nh: usize, boxed: bool) -> OcpQp<f64> {
        let mut stages = Vec::new();
        for _ in 0..nh {
            let a = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let l = DMatrix::from_fn(n + m, n + m, |_, _| rng.random_range(-1.0..1.0));
            let hess = &l * l.transpose() * 0.2 + DMatrix::identity(n + m, n + m) * 0.1;
            let (gu, hu) = if boxed {
                let mut gu = DMatrix::zeros(2 * m, m);
                for i in 0..m {
                    gu[(i, i)] = 1.0;
                    gu[(m + i, i)] = -1.0;
                }
                (gu, DVector::from_element(2 * m, 0.5))
            } else {
                (DMatrix::zeros(0, m), DVector::zeros(0))
            };
            let (gx, hx) = if boxed {
                (DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0)), DVector::from_element(1, 1.0))
            } else {
                (DMatrix::zeros(0, n), DVector::zeros(0))
            };
            stages.push(OcpStage {
                a,
                b,
                hess,
                qx: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                qu: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                gx,
                hx,
                gu,
                hu,
            });
        }
        OcpQp {
            x_init: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            stages,
            terminal: OcpTerminal {
                hess: DMatrix::identity(n, n) * 2.0,
                qx: DVector::zeros(n),
                gx: DMatrix::zeros(0, n),
                hx: DVector::zeros(0),
            },
        }
    }

    #[test]
    fn structured_and_dense_solves_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for boxed in [false, true] {
            let qp = random_ocp(&mut rng, 3, 2, 6, boxed);
            let opts = QpOptions::with_tol(1e-10);
            let s = qp.solve(&opts).unwrap();
            let d = qp.solve_dense(&opts).unwrap();
            assert_eq!(s.status, QpStatus::Optimal);
            assert_eq!(d.status, QpStatus::Optimal);
            for j in 0..6 {
                assert!((&s.u[j] - &d.u[j]).amax() < 1e-7);
                assert!((&s.nu[j] - &d.nu[j]).amax() < 1e-6);
                assert!((&s.lam_u[j] - &d.lam_u[j]).amax() < 1e-6);
            }
            assert!((s.objective - d.objective).abs() < 1e-8);
        }
    }

    #[test]
    fn solution_is_dynamically_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let qp = random_ocp(&mut rng, 4, 2, 10, true);
        let sol = qp.solve(&QpOptions::with_tol(1e-10)).unwrap();
        let x = qp.rollout(&sol.u);
        for (a, b) in x.iter().zip(&sol.x) {
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn central_point_has_uniform_complementarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let qp = random_ocp(&mut rng, 2, 1, 5, true);
        let cp = qp.central_point(0.1, 1e-10).unwrap();
        assert_eq!(cp.status, QpStatus::Optimal);
        for j in 0..5 {
            let s = &qp.stages[j].hu - &qp.stages[j].gu * &cp.u[j];
            for i in 0..s.len() {
                assert!((s[i] * cp.lam_u[j][i] - 0.1).abs() < 1e-8);
            }
        }
    }
}
