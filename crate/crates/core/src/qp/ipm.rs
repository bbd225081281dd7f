//! Mehrotra predictor-corrector interior point method.
//!
//! The loop only touches the problem through [`KktSystem`], so dense and
//! stage-structured instances share it. With `W = diag(λ/s)` each Newton step
//! reduces to
//!
//! ```text
//! [H + GᵀWG  Aᵀ] [dz]   [rz]
//! [A         0 ] [dν] = [re]
//! ```

use nalgebra::DVector;

use super::{QpOptions, QpStatus, WarmStart};
use crate::error::Result;
use crate::scalar::Real;

/// Iterations without a new best KKT error before the solve gives up.
const STALL_ITERS: usize = 10;

/// Problem access needed by the interior point loop.
pub trait KktSystem<T: Real> {
    fn n_var(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn linear(&self) -> &DVector<T>;
    fn eq_rhs(&self) -> &DVector<T>;
    fn ineq_rhs(&self) -> &DVector<T>;
    fn hess_mul(&self, z: &DVector<T>) -> DVector<T>;
    fn eq_mul(&self, z: &DVector<T>) -> DVector<T>;
    fn eq_tmul(&self, nu: &DVector<T>) -> DVector<T>;
    fn ineq_mul(&self, z: &DVector<T>) -> DVector<T>;
    fn ineq_tmul(&self, lam: &DVector<T>) -> DVector<T>;
    /// Factorizes the reduced system for the diagonal weight `w`.
    fn factor(&mut self, w: &DVector<T>) -> Result<()>;
    /// Solves the factorized reduced system.
    fn solve(&self, rz: &DVector<T>, re: &DVector<T>) -> Result<(DVector<T>, DVector<T>)>;
}

#[derive(Debug, Clone)]
pub struct IpmResult<T: Real> {
    pub z: DVector<T>,
    pub nu: DVector<T>,
    pub lambda: DVector<T>,
    pub s: DVector<T>,
    pub status: QpStatus,
    pub kkt_error: T,
    pub iterations: usize,
}

struct Residuals<T: Real> {
    dual: DVector<T>,
    eq: DVector<T>,
    ineq: DVector<T>,
    dual_scale: T,
    primal_scale: T,
}

fn residuals<T: Real, K: KktSystem<T>>(
    sys: &K,
    z: &DVector<T>,
    nu: &DVector<T>,
    lam: &DVector<T>,
    s: &DVector<T>,
) -> Residuals<T> {
    let hz = sys.hess_mul(z);
    let atn = sys.eq_tmul(nu);
    let gtl = sys.ineq_tmul(lam);
    let dual = &hz + sys.linear() + &atn + &gtl;
    let az = sys.eq_mul(z);
    let gz = sys.ineq_mul(z);
    let eq = &az - sys.eq_rhs();
    let ineq = &gz + s - sys.ineq_rhs();
    let dual_scale = T::one() + amax(&hz).max(amax(sys.linear())).max(amax(&atn)).max(amax(&gtl));
    let primal_scale = T::one()
        + amax(&az)
            .max(amax(sys.eq_rhs()))
            .max(amax(&gz))
            .max(amax(sys.ineq_rhs()));
    Residuals { dual, eq, ineq, dual_scale, primal_scale }
}

/// Max-norm that reports any non-finite entry as infinite (a plain max
/// would skip NaN).
fn amax<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |a, x| if x.is_finite() { a.max(x.abs()) } else { T::lit(f64::INFINITY) })
}

/// Largest `α ∈ (0, 1]` keeping `v + α dv ≥ 0`.
fn max_step<T: Real>(v: &DVector<T>, dv: &DVector<T>) -> T {
    v.iter().zip(dv.iter()).fold(T::one(), |a, (vi, di)| {
        if *di < T::zero() {
            a.min(-*vi / *di)
        } else {
            a
        }
    })
}

struct Direction<T: Real> {
    dz: DVector<T>,
    dnu: DVector<T>,
    ds: DVector<T>,
    dlam: DVector<T>,
}

fn direction<T: Real, K: KktSystem<T>>(
    sys: &K,
    r: &Residuals<T>,
    s: &DVector<T>,
    lam: &DVector<T>,
    rcent: &DVector<T>,
) -> Result<Direction<T>> {
    let tmp = DVector::from_fn(s.len(), |i, _| (lam[i] * r.ineq[i] - rcent[i]) / s[i]);
    let rz = -&r.dual - sys.ineq_tmul(&tmp);
    let re = -&r.eq;
    let (dz, dnu) = sys.solve(&rz, &re)?;
    let ds = -&r.ineq - sys.ineq_mul(&dz);
    let dlam = DVector::from_fn(s.len(), |i, _| (-rcent[i] - lam[i] * ds[i]) / s[i]);
    Ok(Direction { dz, dnu, ds, dlam })
}

/// Runs the predictor-corrector loop.
pub fn mehrotra<T: Real, K: KktSystem<T>>(
    sys: &mut K,
    opts: &QpOptions<T>,
    warm: Option<&WarmStart<T>>,
) -> Result<IpmResult<T>> {
    let n = sys.n_var();
    let m = sys.n_ineq();
    let tol = opts.tol;

    // Initial point: least-squares style solve with unit weights.
    sys.factor(&DVector::from_element(m, T::one()))?;
    let (mut z, mut nu) = {
        let rz = -sys.linear() + sys.ineq_tmul(sys.ineq_rhs());
        sys.solve(&rz, sys.eq_rhs())?
    };
    let mut lam = DVector::from_element(m, T::one());
    if let Some(w) = warm {
        if w.z.len() == n {
            z = w.z.clone();
        }
        if let Some(l) = &w.lambda_ineq {
            if l.len() == m {
                let floor = tol.sqrt();
                lam = l.map(|v| v.max(floor));
            }
        }
    }
    let mut s = sys.ineq_rhs() - sys.ineq_mul(&z);
    if m > 0 {
        let floor = if warm.is_some() { tol.sqrt() } else { T::one() };
        let smin = s.min();
        if warm.is_some() {
            s.apply(|v| *v = v.max(floor));
        } else if smin < floor {
            let shift = floor - smin;
            s.apply(|v| *v += shift);
        }
    }

    let m_t = T::from_usize(m.max(1)).unwrap();
    let mut status = QpStatus::MaxIter;
    let mut kkt = T::lit(f64::INFINITY);
    let mut iterations = 0;
    let mut best = (T::lit(f64::INFINITY), T::zero(), z.clone(), nu.clone(), lam.clone(), s.clone());
    let mut since_best = 0;

    for it in 0..=opts.max_iter {
        iterations = it;
        let r = residuals(&*sys, &z, &nu, &lam, &s);
        let mu = if m > 0 { s.dot(&lam) / m_t } else { T::zero() };
        let rd = amax(&r.dual) / r.dual_scale;
        let rp = amax(&r.eq).max(amax(&r.ineq)) / r.primal_scale;
        let comp = match opts.target_mu {
            Some(target) => s
                .iter()
                .zip(lam.iter())
                .fold(T::zero(), |a, (si, li)| a.max((*si * *li - target).abs() / target)),
            None => amax(&s.component_mul(&lam)),
        };
        kkt = if rd.is_finite() && rp.is_finite() && comp.is_finite() {
            rd.max(rp).max(comp)
        } else {
            T::lit(f64::INFINITY)
        };
        if kkt <= tol {
            status = QpStatus::Optimal;
            break;
        }
        if kkt < best.0 {
            best = (kkt, rp, z.clone(), nu.clone(), lam.clone(), s.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= STALL_ITERS || !kkt.is_finite() {
            // round-off took over (or the factorization overflowed on a
            // degenerate row); fall back to the best point seen
            (kkt, _, z, nu, lam, s) = best.clone();
            if best.1 > tol.sqrt() {
                status = QpStatus::Infeasible;
            }
            break;
        }
        if m > 0 && farkas_certificate(&*sys, &nu, &lam, tol) {
            status = QpStatus::Infeasible;
            break;
        }
        if it == opts.max_iter {
            if rp > tol.sqrt() {
                status = QpStatus::Infeasible;
            }
            break;
        }

        let w = DVector::from_fn(m, |i, _| lam[i] / s[i]);
        sys.factor(&w)?;

        let d = if let Some(target) = opts.target_mu {
            let rcent = DVector::from_fn(m, |i, _| s[i] * lam[i] - target);
            direction(&*sys, &r, &s, &lam, &rcent)?
        } else if m == 0 {
            direction(&*sys, &r, &s, &lam, &DVector::zeros(0))?
        } else {
            let rcent = s.component_mul(&lam);
            let aff = direction(&*sys, &r, &s, &lam, &rcent)?;
            let a_aff = max_step(&s, &aff.ds).min(max_step(&lam, &aff.dlam));
            let s_aff = &s + &aff.ds * a_aff;
            let l_aff = &lam + &aff.dlam * a_aff;
            let mu_aff = s_aff.dot(&l_aff) / m_t;
            let sigma = (mu_aff / mu).powi(3).min(T::one());
            let rcent = DVector::from_fn(m, |i, _| s[i] * lam[i] + aff.ds[i] * aff.dlam[i] - sigma * mu);
            direction(&*sys, &r, &s, &lam, &rcent)?
        };

        let alpha = if m > 0 {
            (T::lit(0.99) * max_step(&s, &d.ds).min(max_step(&lam, &d.dlam))).min(T::one())
        } else {
            T::one()
        };
        z += &d.dz * alpha;
        nu += &d.dnu * alpha;
        s += &d.ds * alpha;
        lam += &d.dlam * alpha;
    }

    Ok(IpmResult { z, nu, lambda: lam, s, status, kkt_error: kkt, iterations })
}

/// `λ ≥ 0, ν` with `Aᵀν + Gᵀλ ≈ 0` and `bᵀν + hᵀλ < 0` proves infeasibility.
fn farkas_certificate<T: Real, K: KktSystem<T>>(sys: &K, nu: &DVector<T>, lam: &DVector<T>, tol: T) -> bool {
    let scale = amax(nu).max(amax(lam));
    if scale < T::lit(1e6) {
        return false;
    }
    let stat = sys.eq_tmul(nu) + sys.ineq_tmul(lam);
    let gap = sys.eq_rhs().dot(nu) + sys.ineq_rhs().dot(lam);
    let eps = tol.sqrt().max(T::lit(1e-6));
    amax(&stat) / scale <= eps && gap / scale < -eps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_norm_does_not_hide_nan() {
        let v = DVector::from_vec(vec![1.0, f64::NAN, -3.0]);
        assert_eq!(amax(&v), f64::INFINITY);
        assert_eq!(amax(&DVector::from_vec(vec![1.0, -3.0])), 3.0);
        assert_eq!(amax(&DVector::<f64>::zeros(0)), 0.0);
    }
}
