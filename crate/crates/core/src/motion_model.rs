//! Constant turn rate and velocity (CTRV) kinematics.
//!
//! The state is `[x, y, theta, v, w]`: planar position, heading, speed and yaw
//! rate. Between samples the vehicle follows a circular arc of radius `v / w`,
//! degenerating to a straight line when the yaw rate is (numerically) zero.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, SMatrix, Vector5};

use crate::error::{Error, Result};

/// Yaw rates with magnitude at or below this use the straight-line branch.
pub const YAW_RATE_EPS: f64 = 1e-6;

/// Wraps an angle into `(-pi, pi]`. Non-finite input yields NaN.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// [`wrap_angle`] that rejects non-finite input.
pub fn checked_wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite angle {a}")));
    }
    Ok(wrap_angle(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State5 {
    /// Longitudinal position (m).
    pub x: f64,
    /// Lateral position (m).
    pub y: f64,
    /// Heading (rad), kept in `(-pi, pi]`.
    pub theta: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Yaw rate (rad/s).
    pub w: f64,
}

impl State5 {
    pub fn new(x: f64, y: f64, theta: f64, v: f64, w: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v,
            w,
        }
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.x, self.y, self.theta, self.v, self.w)
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3], s[4])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite() && self.w.is_finite()
    }

    pub fn position_distance(&self, other: &State5) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Variances of the acceleration and yaw-acceleration white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoiseSpec {
    pub sigma_va: f64,
    pub sigma_vw: f64,
}

impl ProcessNoiseSpec {
    pub fn new(sigma_va: f64, sigma_vw: f64) -> Result<Self> {
        let spec = Self { sigma_va, sigma_vw };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        Self {
            sigma_va: 0.0,
            sigma_vw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_va >= 0.0 && self.sigma_vw >= 0.0) || !self.sigma_va.is_finite() || !self.sigma_vw.is_finite() {
            return Err(Error::Config(format!(
                "process noise variances must be finite and non-negative, got ({}, {})",
                self.sigma_va, self.sigma_vw
            )));
        }
        Ok(())
    }

    /// The 2x2 noise covariance `diag(sigma_va, sigma_vw)`.
    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_va, 0.0, 0.0, self.sigma_vw)
    }
}

impl Default for ProcessNoiseSpec {
    fn default() -> Self {
        Self {
            sigma_va: 0.01,
            sigma_vw: 0.01,
        }
    }
}

/// Maps the `(v_a, v_w)` noise pair into the state over one sample period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMapG {
    pub dt: f64,
    pub theta: f64,
}

impl NoiseMapG {
    pub fn matrix(&self) -> SMatrix<f64, 5, 2> {
        let half_dt2 = 0.5 * self.dt * self.dt;
        let (s, c) = self.theta.sin_cos();
        SMatrix::<f64, 5, 2>::from_row_slice(&[
            half_dt2 * c,
            0.0, //
            half_dt2 * s,
            0.0, //
            0.0,
            half_dt2, //
            self.dt,
            0.0, //
            0.0,
            self.dt,
        ])
    }
}

/// `sin(a) / a`, with its Taylor series near zero.
pub(crate) fn sinc(a: f64) -> f64 {
    if a.abs() > 1e-4 {
        a.sin() / a
    } else {
        1.0 - a * a / 6.0
    }
}

/// [`sinc`] and its derivative from a single `sin_cos`.
pub(crate) fn sinc_with_derivative(a: f64) -> (f64, f64) {
    if a.abs() > 1e-4 {
        let (sin, cos) = a.sin_cos();
        (sin / a, (a * cos - sin) / (a * a))
    } else {
        (1.0 - a * a / 6.0, -a / 3.0)
    }
}

/// Displacement over one step of an arc: `v dt sinc(w dt / 2)` along the
/// chord heading `theta + w dt / 2`.
///
/// `(v/w)(sin(theta + w dt) - sin(theta))` equals this product exactly; the
/// product form has no cancellation as `w -> 0`, where it reduces to the
/// straight-line displacement.
#[inline]
pub(crate) fn arc_displacement(theta: f64, v: f64, w: f64, dt: f64) -> (f64, f64) {
    let half = 0.5 * w * dt;
    let chord = if w.abs() > YAW_RATE_EPS {
        v * dt * sinc(half)
    } else {
        v * dt
    };
    let (sin, cos) = (theta + half).sin_cos();
    (chord * cos, chord * sin)
}

/// Noise-free CTRV transition over `dt`.
pub fn ctrv_step(s: &State5, dt: f64) -> State5 {
    let (dx, dy) = arc_displacement(s.theta, s.v, s.w, dt);
    State5 {
        x: s.x + dx,
        y: s.y + dy,
        theta: wrap_angle(s.theta + s.w * dt),
        v: s.v,
        w: s.w,
    }
}

/// CTRV transition perturbed by an acceleration / yaw-acceleration pair held
/// constant over the step. The same additive terms apply on both branches.
pub fn ctrv_step_noisy(s: &State5, noise: (f64, f64), dt: f64) -> State5 {
    let (va, vw) = noise;
    let mut next = ctrv_step(s, dt);
    let half_dt2 = 0.5 * dt * dt;
    let (sin, cos) = s.theta.sin_cos();
    next.x += half_dt2 * cos * va;
    next.y += half_dt2 * sin * va;
    next.theta = wrap_angle(next.theta + half_dt2 * vw);
    next.v += dt * va;
    next.w += dt * vw;
    next
}

/// Process covariance `G cov(v) G^T` for a step of length `dt` at heading `theta`.
pub fn process_cov(theta: f64, dt: f64, spec: &ProcessNoiseSpec) -> SMatrix<f64, 5, 5> {
    let g = NoiseMapG { dt, theta }.matrix();
    g * spec.covariance() * g.transpose()
}
