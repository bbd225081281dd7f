//! Chart switching for angle-limit constraints.
//!
//! An angle `q` is constrained to the window `[−π + δ, π + δ]`. Before each
//! linearization the shift `δ` is re-centred on the current angle, moving at
//! most `max_step` per iteration (modulo 2π), so the limit never sits on top
//! of the iterate when the trajectory crosses `±π`.
//!
//! Wrapping is done on the window rather than on the state: the shift jumps
//! to the 2π branch nearest the angle. The constraint is periodic, so this is
//! the same as wrapping the angle, but objectives that are not periodic
//! (a goal at `φ = π`, say) stay smooth along the rollout.

use nalgebra::DVector;

use crate::scalar::Real;

/// Wraps an angle into `[−π, π]`. Values already in range are returned
/// untouched.
pub fn wrap_angle<T: Real>(q: T) -> T {
    let pi = T::pi();
    if q >= -pi && q <= pi {
        return q;
    }
    let two_pi = T::two_pi();
    let mut r = (q + pi) % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    r - pi
}

/// `x − goal` with the components in `angles` wrapped into `[−π, π]`, so a
/// distance to a goal on the circle ignores whole turns.
pub fn angular_residual<T: Real>(x: &DVector<T>, goal: &DVector<T>, angles: &[usize]) -> DVector<T> {
    let mut d = x - goal;
    for &i in angles {
        d[i] = wrap_angle(d[i]);
    }
    d
}

/// Recentres the window on `angle`, moving the shift by at most `max_step`
/// after choosing the 2π branch nearest the angle.
pub fn recenter_shift<T: Real>(angle: T, previous: T, max_step: T) -> T {
    let two_pi = T::two_pi();
    let base = previous + two_pi * ((angle - previous) / two_pi).round();
    base + (angle - base).clamp(-max_step, max_step)
}

/// `(lower, upper)` limits of the window with shift `δ`.
pub fn window<T: Real>(shift: T) -> (T, T) {
    (-T::pi() + shift, T::pi() + shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_angle_keeps_nominal_window() {
        let d = recenter_shift(0.0, 0.0, PI / 2.0);
        assert_eq!(d, 0.0);
        assert_eq!(window(d), (-PI, PI));
    }

    #[test]
    fn near_boundary_angle_gets_margin() {
        let q = 0.9 * PI;
        let d = recenter_shift(q, 0.0, PI / 2.0);
        let (lo, hi) = window(d);
        let margin = (q - lo).min(hi - q);
        assert!(margin >= PI / 2.0, "margin {margin}");
    }

    #[test]
    fn far_angle_picks_its_branch() {
        let q = 8.6;
        let d = recenter_shift(q, 0.0, PI / 2.0);
        assert!((d - (2.0 * PI + PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn residual_ignores_whole_turns() {
        let x = DVector::from_vec(vec![-PI + 0.1, 2.0 * PI + 0.3, 5.0]);
        let g = DVector::from_vec(vec![PI, 0.0, 1.0]);
        let d = angular_residual(&x, &g, &[0, 1]);
        assert!((d - DVector::from_vec(vec![0.1, 0.3, 4.0])).amax() < 1e-12);
    }

    #[test]
    fn in_range_angle_is_untouched() {
        let q = -PI + 1e-9;
        assert_eq!(wrap_angle(q), q);
    }

    proptest! {
        #[test]
        fn wrapped_angle_is_in_range_and_equivalent(q in -50.0f64..50.0) {
            let w = wrap_angle(q);
            prop_assert!((-PI..=PI).contains(&w));
            prop_assert!(((q - w) / (2.0 * PI) - ((q - w) / (2.0 * PI)).round()).abs() < 1e-9);
        }

        #[test]
        fn shift_moves_at_most_max_step_modulo_two_pi(q in -10.0f64..10.0, prev in -10.0f64..10.0) {
            let d = recenter_shift(q, prev, PI / 2.0);
            prop_assert!(wrap_angle(d - prev).abs() <= PI / 2.0 + 1e-12);
        }

        #[test]
        fn window_always_holds_the_angle(q in -30.0f64..30.0, prev in -10.0f64..10.0) {
            let (lo, hi) = window(recenter_shift(q, prev, PI / 2.0));
            prop_assert!(q - lo >= PI / 2.0 - 1e-12 && hi - q >= PI / 2.0 - 1e-12);
        }
    }
}
