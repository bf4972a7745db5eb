//! Least-squares fit of a policy rollout to an observed pose segment.
//!
//! Parameters are `[x0, y0, theta0, v, w0, w_dot]`. The start pose is a
//! nuisance shared by both policies; `w_dot` is pinned to zero for lane keep.
//! Residuals, the Gauss-Newton normal equations and the SSE are accumulated
//! in a single pass over the rollout using forward-mode derivatives of the
//! arc displacement.

use nalgebra::{SMatrix, SVector};

use std::f64::consts::PI;

use crate::motion_model::{sinc, sinc_with_derivative, wrap_angle};
use crate::trajectory::Measurement3;

pub(crate) const NPARAM: usize = 6;
pub(crate) const X0: usize = 0;
pub(crate) const Y0: usize = 1;
pub(crate) const TH0: usize = 2;
pub(crate) const V: usize = 3;
pub(crate) const W0: usize = 4;
pub(crate) const WDOT: usize = 5;

pub(crate) type Params = [f64; NPARAM];

const MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Normal {
    pub sse: f64,
    pub sse_channels: [f64; 3],
    /// Upper triangle of `J^T J`.
    pub jtj: [[f64; NPARAM]; NPARAM],
    pub jtr: [f64; NPARAM],
}

#[inline(always)]
fn add_outer(jtj: &mut [[f64; NPARAM]; NPARAM], jtr: &mut [f64; NPARAM], d: &[f64; NPARAM], r: f64) {
    for i in 0..NPARAM {
        jtr[i] += d[i] * r;
        for j in i..NPARAM {
            jtj[i][j] += d[i] * d[j];
        }
    }
}

/// Heading residual; residuals are rarely more than a turn off, so the
/// common case avoids a floating-point remainder.
#[inline(always)]
fn angle_residual(a: f64) -> f64 {
    if a > -PI && a <= PI {
        a
    } else {
        wrap_angle(a)
    }
}

/// Residuals of the rollout defined by `p` against `obs`; with `jac` set the
/// normal equations are accumulated too.
pub(crate) fn evaluate(obs: &[Measurement3], dt: f64, p: &Params, merge: bool, jac: bool) -> Normal {
    let mut jtj = [[0.0; NPARAM]; NPARAM];
    let mut jtr = [0.0; NPARAM];
    let mut sse_channels = [0.0; 3];
    let (mut x, mut y, mut th) = (p[X0], p[Y0], p[TH0]);
    let v = p[V];
    let wdot = if merge { p[WDOT] } else { 0.0 };

    // d(x)/dp, d(y)/dp, d(theta)/dp
    let mut dx = [0.0; NPARAM];
    let mut dy = [0.0; NPARAM];
    let mut dth = [0.0; NPARAM];
    dx[X0] = 1.0;
    dy[Y0] = 1.0;
    dth[TH0] = 1.0;

    // Lane keep turns at a constant rate, so the chord factors are shared.
    let lane_keep_chord = sinc_with_derivative(0.5 * p[W0] * dt);
    let half_dt = 0.5 * dt;

    let last = obs.len().saturating_sub(1);
    for (k, o) in obs.iter().enumerate() {
        let rx = o.x - x;
        let ry = o.y - y;
        let rth = angle_residual(o.theta - th);
        sse_channels[0] += rx * rx;
        sse_channels[1] += ry * ry;
        sse_channels[2] += rth * rth;
        if jac {
            add_outer(&mut jtj, &mut jtr, &dx, rx);
            add_outer(&mut jtj, &mut jtr, &dy, ry);
            add_outer(&mut jtj, &mut jtr, &dth, rth);
        }
        if k == last {
            break;
        }

        let tk = k as f64 * dt;
        let w = p[W0] + wdot * tk;
        let a = half_dt * w;
        let (s, s_prime) = if merge {
            sinc_with_derivative(a)
        } else {
            lane_keep_chord
        };
        let chord = v * dt * s;
        let (sin_phi, cos_phi) = (th + a).sin_cos();
        let step_x = chord * cos_phi;
        let step_y = chord * sin_phi;

        if jac {
            // dw_k/dp has entries on w0 (1) and w_dot (t_k).
            let dchord_dw = v * dt * s_prime * half_dt;
            let mut dw = [0.0; NPARAM];
            dw[W0] = 1.0;
            dw[WDOT] = if merge { tk } else { 0.0 };
            let mut dchord = [0.0; NPARAM];
            dchord[V] = dt * s;
            for i in 0..NPARAM {
                let dc = dchord[i] + dchord_dw * dw[i];
                let dphi = dth[i] + half_dt * dw[i];
                dx[i] += cos_phi * dc - step_y * dphi;
                dy[i] += sin_phi * dc + step_x * dphi;
                dth[i] += dt * dw[i];
            }
        }

        x += step_x;
        y += step_y;
        th += w * dt;
    }
    Normal {
        sse: sse_channels.iter().sum(),
        sse_channels,
        jtj,
        jtr,
    }
}

/// Symmetric system of the normal equations with `w_dot` pinned for lane keep.
fn system(n: &Normal, merge: bool) -> (SMatrix<f64, NPARAM, NPARAM>, SVector<f64, NPARAM>) {
    let mut a = SMatrix::<f64, NPARAM, NPARAM>::from_fn(|i, j| n.jtj[i.min(j)][i.max(j)]);
    let mut b = SVector::<f64, NPARAM>::from(n.jtr);
    if !merge {
        for i in 0..NPARAM {
            a[(WDOT, i)] = 0.0;
            a[(i, WDOT)] = 0.0;
        }
        a[(WDOT, WDOT)] = 1.0;
        b[WDOT] = 0.0;
    }
    (a, b)
}

/// Levenberg-Marquardt refinement from `start`. Stops once the undamped
/// Gauss-Newton step predicts an SSE reduction below `1e-12` (relative to
/// the SSE for large residuals), so the returned SSE is that accurate.
pub(crate) fn refine(obs: &[Measurement3], dt: f64, start: Params, merge: bool) -> (Params, Normal) {
    let mut p = start;
    if !merge {
        p[WDOT] = 0.0;
    }
    let mut cur = evaluate(obs, dt, &p, merge, true);
    let mut mu = 1e-4;
    let active = if merge { NPARAM } else { NPARAM - 1 };

    for _ in 0..MAX_ITERS {
        let (a0, b) = system(&cur, merge);
        let tol = 1e-12 + 1e-14 * cur.sse;
        if let Some(gn) = a0.cholesky() {
            if b.dot(&gn.solve(&b)) <= tol {
                break;
            }
        }
        let mut a = a0;
        for i in 0..active {
            a[(i, i)] += mu * a0[(i, i)].max(1e-9);
        }
        let Some(chol) = a.cholesky() else {
            mu *= 10.0;
            if mu > 1e16 {
                break;
            }
            continue;
        };
        let delta = chol.solve(&b);
        let mut cand = p;
        for i in 0..active {
            cand[i] += delta[i];
        }
        let next = evaluate(obs, dt, &cand, merge, true);
        if next.sse.is_finite() && next.sse <= cur.sse {
            let stalled = (0..active).all(|i| delta[i].abs() <= 1e-14 * (1.0 + cand[i].abs()));
            p = cand;
            cur = next;
            mu = (mu / 3.0).max(1e-15);
            if stalled {
                break;
            }
        } else {
            mu *= 4.0;
            if mu > 1e16 {
                break;
            }
        }
    }
    (p, cur)
}

fn chord_heading(a: &Measurement3, b: &Measurement3) -> Option<f64> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dx.hypot(dy) > 1e-12).then(|| dy.atan2(dx))
}

/// Finite-difference starting point for a constant-turn fit: chord headings
/// over the first and last quarter give the turn rate, the overall chord and
/// swept angle give the speed.
pub(crate) fn constant_turn_seed(obs: &[Measurement3], dt: f64) -> Params {
    let n = obs.len();
    let mut p = [obs[0].x, obs[0].y, obs[0].theta, 0.0, 0.0, 0.0];
    if n < 2 {
        return p;
    }
    let m = (n / 4).max(1);
    let (Some(h_start), Some(h_end)) = (
        chord_heading(&obs[0], &obs[m]),
        chord_heading(&obs[n - 1 - m], &obs[n - 1]),
    ) else {
        return p;
    };
    let span = (n - 1 - m) as f64 * dt;
    let w = if span > 0.0 {
        wrap_angle(h_end - h_start) / span
    } else {
        0.0
    };
    let total = (n - 1) as f64 * dt;
    let swept = w * total;
    let chord = (obs[n - 1].x - obs[0].x).hypot(obs[n - 1].y - obs[0].y);
    let v = chord / total / sinc(0.5 * swept);
    p[TH0] = h_start - 0.5 * w * m as f64 * dt;
    p[V] = v;
    p[W0] = w;
    p
}

/// Seed from the observed heading channel: unwrapped headings regressed on
/// time give `theta0` and `w`; speed from the overall chord.
pub(crate) fn heading_channel_seed(obs: &[Measurement3], dt: f64) -> Params {
    let n = obs.len();
    let mut p = constant_turn_seed(obs, dt);
    if n < 3 {
        return p;
    }
    let mut unwrapped = Vec::with_capacity(n);
    let mut prev = obs[0].theta;
    unwrapped.push(prev);
    for o in &obs[1..] {
        prev += wrap_angle(o.theta - prev);
        unwrapped.push(prev);
    }
    let nf = n as f64;
    let tm = (nf - 1.0) * dt / 2.0;
    let hm = unwrapped.iter().sum::<f64>() / nf;
    let (mut stt, mut sth) = (0.0, 0.0);
    for (k, h) in unwrapped.iter().enumerate() {
        let t = k as f64 * dt - tm;
        stt += t * t;
        sth += t * (h - hm);
    }
    let w = sth / stt;
    p[TH0] = hm - w * tm;
    p[W0] = w;
    let total = (nf - 1.0) * dt;
    let chord = (obs[n - 1].x - obs[0].x).hypot(obs[n - 1].y - obs[0].y);
    p[V] = chord / total / sinc(0.5 * w * total);
    p
}

/// Seed for a linearly ramping turn rate from chord headings over thirds.
pub(crate) fn ramp_seed(obs: &[Measurement3], dt: f64) -> Option<Params> {
    let n = obs.len();
    if n < 9 {
        return None;
    }
    let third = n / 3;
    let parts = [(0, third), (third, 2 * third), (2 * third, n - 1)];
    let mut heads = [0.0; 3];
    let mut times = [0.0; 3];
    for (i, &(a, b)) in parts.iter().enumerate() {
        heads[i] = chord_heading(&obs[a], &obs[b])?;
        times[i] = 0.5 * (a + b) as f64 * dt;
    }
    let wa = wrap_angle(heads[1] - heads[0]) / (times[1] - times[0]);
    let wb = wrap_angle(heads[2] - heads[1]) / (times[2] - times[1]);
    let ta = 0.5 * (times[0] + times[1]);
    let tb = 0.5 * (times[1] + times[2]);
    let wdot = (wb - wa) / (tb - ta);
    let w0 = wa - wdot * ta;
    let t1 = times[0];
    let theta0 = heads[0] - w0 * t1 - 0.5 * wdot * t1 * t1;
    let total = (n - 1) as f64 * dt;
    let swept = w0 * total + 0.5 * wdot * total * total;
    let chord = (obs[n - 1].x - obs[0].x).hypot(obs[n - 1].y - obs[0].y);
    let v = chord / total / sinc(0.5 * swept);
    Some([obs[0].x, obs[0].y, theta0, v, w0, wdot])
}
