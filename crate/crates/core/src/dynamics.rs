//! Longitudinal acceleration laws.
//!
//! Every vehicle follows the Intelligent Driver Model. Robot vehicles inside
//! the control zone of an unsignalized intersection replace it with the
//! Stop/Go override in [`rv_longitudinal`].

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Hard lower bound on any IDM output, m/s².
pub const EMERGENCY_DECEL: f64 = 8.0;

/// Smallest distance to the stop line used by the Stop law, m.
pub const MIN_STOP_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams<T> {
    /// Desired speed v0, m/s.
    pub desired_speed: T,
    /// Maximum acceleration a, m/s².
    pub max_accel: T,
    /// Comfortable deceleration b, m/s².
    pub comfort_decel: T,
    /// Minimum bumper gap s0, m.
    pub min_gap: T,
    /// Desired time headway, s.
    pub time_headway: T,
    /// Acceleration exponent δ.
    pub exponent: T,
}

impl<T: Float> IdmParams<T> {
    pub fn is_valid(&self) -> bool {
        let positive = [
            self.desired_speed,
            self.max_accel,
            self.comfort_decel,
            self.min_gap,
            self.time_headway,
        ]
        .iter()
        .all(|x| x.is_finite() && *x > T::zero());
        positive && self.exponent.is_finite() && self.exponent >= T::one()
    }

    pub fn with_desired_speed(mut self, v0: T) -> Self {
        self.desired_speed = v0;
        self
    }
}

impl Default for IdmParams<f64> {
    fn default() -> Self {
        Self {
            desired_speed: 13.89,
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
            time_headway: 1.5,
            exponent: 4.0,
        }
    }
}

/// Bumper gap and approach rate (own speed minus leader speed) to a leader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap<T> {
    pub distance: T,
    pub approach_rate: T,
}

impl<T> Gap<T> {
    pub fn new(distance: T, approach_rate: T) -> Self {
        Self {
            distance,
            approach_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RvDecision {
    Stop,
    Go,
}

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("float constant representable")
}

/// Desired dynamic gap s* of the IDM, floored at s0.
pub fn desired_gap<T: Float>(v: T, approach_rate: T, p: &IdmParams<T>) -> T {
    let two = cast::<T>(2.0);
    let s = p.min_gap
        + v * p.time_headway
        + v * approach_rate / (two * (p.max_accel * p.comfort_decel).sqrt());
    s.max(p.min_gap)
}

pub fn idm_accel<T: Float>(v: T, leader: Option<Gap<T>>, p: &IdmParams<T>) -> T {
    debug_assert!(v >= T::zero(), "negative speed {:?}", v.to_f64());
    let free = T::one() - (v / p.desired_speed).powf(p.exponent);
    let interaction = match leader {
        Some(gap) => {
            debug_assert!(
                gap.distance > T::zero(),
                "non-positive gap {:?}",
                gap.distance.to_f64()
            );
            let ratio = desired_gap(v, gap.approach_rate, p) / gap.distance;
            ratio * ratio
        }
        None => T::zero(),
    };
    let accel = p.max_accel * (free - interaction);
    accel.max(-cast::<T>(EMERGENCY_DECEL)).min(p.max_accel)
}

/// Stop/Go override for a robot vehicle inside the control zone.
///
/// Go accelerates at the maximum rate, capped by IDM when a leader is
/// present so a queued vehicle ahead is never rear-ended. Above the desired
/// speed Go falls back to the IDM free-road term. Stop brakes with
/// `-v^2 / (2 d_int)`, which halts exactly at the stop line in continuous
/// time.
pub fn rv_longitudinal<T: Float>(
    decision: RvDecision,
    v: T,
    d_int: T,
    leader: Option<Gap<T>>,
    p: &IdmParams<T>,
) -> T {
    match decision {
        RvDecision::Go => {
            let free = if v < p.desired_speed {
                p.max_accel
            } else {
                idm_accel(v, None, p)
            };
            match leader {
                Some(_) => free.min(idm_accel(v, leader, p)),
                None => free,
            }
        }
        RvDecision::Stop => stop_decel(v, d_int),
    }
}

/// The Stop law on its own: `-v^2 / (2 max(d_int, 0.5))`, zero when halted.
pub fn stop_decel<T: Float>(v: T, d_int: T) -> T {
    if v <= T::zero() {
        return T::zero();
    }
    let d = d_int.max(cast(MIN_STOP_DISTANCE));
    -(v * v) / (cast::<T>(2.0) * d)
}

/// Stop law adapted to the fixed-step integrator.
///
/// Once a full step at the current speed would reach the line, the vehicle
/// brakes to rest within this step instead. With this guard the discrete
/// trajectory halts within `v * dt` before the line; without it the explicit
/// update creeps past the line because the law decays with `v^2`.
pub fn stop_decel_discrete<T: Float>(v: T, d_int: T, dt: T) -> T {
    if v <= T::zero() {
        return T::zero();
    }
    if v * dt >= d_int {
        return -v / dt;
    }
    stop_decel(v, d_int)
}

/// Semi-implicit Euler step: `v' = max(0, v + a dt)`, `x' = x + v' dt`.
pub fn step_kinematics<T: Float>(v: T, x: T, accel: T, dt: T) -> (T, T) {
    let v_next = (v + accel * dt).max(T::zero());
    (v_next, x + v_next * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> IdmParams<f64> {
        IdmParams {
            desired_speed: 10.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
            time_headway: 1.5,
            exponent: 4.0,
        }
    }

    #[test]
    fn free_flow_equilibrium_and_standstill() {
        let p = params();
        assert_eq!(idm_accel(10.0, None, &p), 0.0);
        assert_eq!(idm_accel(0.0, None, &p), 1.5);
    }

    #[test]
    fn steady_following_equilibrium_gap() {
        // Root of a(v=5, s) = 0 by bisection, independent of the closed form.
        let p = params();
        let f = |s: f64| idm_accel(5.0, Some(Gap::new(s, 0.0)), &p);
        let (mut lo, mut hi) = (1.0_f64, 100.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        // 9.5 / sqrt(1 - 0.5^4) = 9.811..., frozen from the bisection above.
        assert!((root - 9.811_557_810_392_12).abs() < 1e-9, "root {root}");
        assert!((root - 9.5 / (1.0 - 0.5_f64.powi(4)).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn output_is_clamped_to_emergency_decel() {
        let p = params();
        let a = idm_accel(10.0, Some(Gap::new(0.1, 10.0)), &p);
        assert_eq!(a, -EMERGENCY_DECEL);
    }

    #[test]
    fn stop_law_matches_formula() {
        let p = params();
        assert_eq!(rv_longitudinal(RvDecision::Stop, 10.0, 20.0, None, &p), -2.5);
        assert_eq!(rv_longitudinal(RvDecision::Stop, 0.0, 20.0, None, &p), 0.0);
        // d_int floor
        assert_eq!(stop_decel(1.0, 0.1), -1.0);
    }

    #[test]
    fn go_on_free_road_is_max_accel() {
        let p = params();
        assert_eq!(rv_longitudinal(RvDecision::Go, 3.0, 20.0, None, &p), 1.5);
        // queued leader caps Go
        let capped = rv_longitudinal(RvDecision::Go, 8.0, 20.0, Some(Gap::new(5.0, 8.0)), &p);
        assert!(capped < 0.0);
    }

    #[test]
    fn kinematic_steps() {
        assert_eq!(step_kinematics(0.0, 7.0, 0.0, 0.5), (0.0, 7.0));
        assert_eq!(step_kinematics(1.0, 7.0, -10.0, 0.5), (0.0, 7.0));
        assert_eq!(step_kinematics(5.0, 7.0, 1.0, 0.5), (5.5, 9.75));
    }

    #[test]
    fn generic_over_f32() {
        let p = IdmParams::<f32> {
            desired_speed: 10.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
            time_headway: 1.5,
            exponent: 4.0,
        };
        assert_eq!(idm_accel(0.0f32, None, &p), 1.5);
        assert_eq!(stop_decel(10.0f32, 20.0), -2.5);
    }

    proptest! {
        #[test]
        fn idm_monotone_in_speed_and_gap(
            v in 0.0f64..20.0,
            dv_speed in 0.0f64..5.0,
            gap in 0.5f64..150.0,
            dgap in 0.0f64..50.0,
            lead_v in 0.0f64..20.0,
        ) {
            let p = params();
            // leader speed fixed: approach rate moves with own speed
            let at = |v: f64, s: f64| idm_accel(v, Some(Gap::new(s, v - lead_v)), &p);
            prop_assert!(at(v + dv_speed, gap) <= at(v, gap) + 1e-12);
            prop_assert!(at(v, gap + dgap) >= at(v, gap) - 1e-12);
            let a = at(v, gap);
            prop_assert!(a >= -EMERGENCY_DECEL && a <= p.max_accel);
            let free = idm_accel(v, None, &p);
            prop_assert!(free >= -EMERGENCY_DECEL && free <= p.max_accel);
        }
    }
}
