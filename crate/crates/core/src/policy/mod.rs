//! Lane-keep and merge policies: forward simulation, maximum-likelihood
//! fitting and BIC-based classification of a pose segment.
//!
//! Lane keep holds speed and yaw rate constant. Merge holds speed constant
//! and ramps the yaw rate linearly, `w(t) = w0 + w_dot t`.

pub(crate) mod fit;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::motion_model::{ctrv_step, wrap_angle, State5};
use crate::trajectory::{Measurement3, Trajectory};

use fit::{Normal, Params, TH0, V, W0, WDOT, X0, Y0};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PolicyKind {
    #[serde(rename = "lane-keep")]
    LaneKeep,
    #[serde(rename = "merge")]
    Merge,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::LaneKeep, PolicyKind::Merge];

    /// Number of free policy parameters counted by the BIC penalty.
    pub fn num_params(self) -> usize {
        match self {
            PolicyKind::LaneKeep => 2,
            PolicyKind::Merge => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LaneKeep => "lane-keep",
            PolicyKind::Merge => "merge",
        }
    }

    pub fn other(self) -> PolicyKind {
        match self {
            PolicyKind::LaneKeep => PolicyKind::Merge,
            PolicyKind::Merge => PolicyKind::LaneKeep,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lane-keep" => Ok(PolicyKind::LaneKeep),
            "merge" => Ok(PolicyKind::Merge),
            _ => Err(Error::Domain(format!("unknown policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PolicyParams {
    LaneKeep { v: f64, w: f64 },
    Merge { v: f64, w0: f64, w_dot: f64 },
}

impl PolicyParams {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyParams::LaneKeep { .. } => PolicyKind::LaneKeep,
            PolicyParams::Merge { .. } => PolicyKind::Merge,
        }
    }

    pub fn speed(&self) -> f64 {
        match *self {
            PolicyParams::LaneKeep { v, .. } | PolicyParams::Merge { v, .. } => v,
        }
    }

    /// Yaw rate `t` seconds after the start of the policy.
    pub fn yaw_rate_at(&self, t: f64) -> f64 {
        match *self {
            PolicyParams::LaneKeep { w, .. } => w,
            PolicyParams::Merge { w0, w_dot, .. } => w0 + w_dot * t,
        }
    }

    /// Yaw acceleration; zero for lane keep.
    pub fn yaw_accel(&self) -> f64 {
        match *self {
            PolicyParams::LaneKeep { .. } => 0.0,
            PolicyParams::Merge { w_dot, .. } => w_dot,
        }
    }

    /// Same policy with speed and initial yaw rate replaced.
    pub fn with_initial(&self, v: f64, w: f64) -> Self {
        match *self {
            PolicyParams::LaneKeep { .. } => PolicyParams::LaneKeep { v, w },
            PolicyParams::Merge { w_dot, .. } => PolicyParams::Merge { v, w0: w, w_dot },
        }
    }

    fn from_raw(kind: PolicyKind, p: &Params) -> Self {
        match kind {
            PolicyKind::LaneKeep => PolicyParams::LaneKeep { v: p[V], w: p[W0] },
            PolicyKind::Merge => PolicyParams::Merge {
                v: p[V],
                w0: p[W0],
                w_dot: p[WDOT],
            },
        }
    }
}

/// Scale of the per-channel Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodSpec {
    pub sigma_lik: f64,
}

impl LikelihoodSpec {
    pub fn new(sigma_lik: f64) -> Result<Self> {
        let spec = Self { sigma_lik };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_lik > 0.0 && self.sigma_lik.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_lik must be positive, got {}",
                self.sigma_lik
            )));
        }
        Ok(())
    }

    /// Log density of `n` three-channel samples with summed squared error `sse`.
    pub fn log_likelihood(&self, sse: f64, n: usize) -> f64 {
        let var = self.sigma_lik * self.sigma_lik;
        -1.5 * n as f64 * (TAU * var).ln() - sse / (2.0 * var)
    }
}

impl Default for LikelihoodSpec {
    fn default() -> Self {
        Self { sigma_lik: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyFit {
    pub policy: PolicyKind,
    pub params: PolicyParams,
    /// Fitted state at the first sample of the segment.
    pub start: State5,
    pub log_likelihood: f64,
    pub bic_evidence: f64,
    /// Squared error per channel: x, y, heading.
    pub sse: [f64; 3],
    pub len: usize,
    /// Set when every observed position coincides.
    pub degenerate: bool,
}

impl PolicyFit {
    pub(crate) fn from_raw(
        policy: PolicyKind,
        p: &Params,
        normal: &Normal,
        len: usize,
        spec: &LikelihoodSpec,
        degenerate: bool,
    ) -> Self {
        let log_likelihood = spec.log_likelihood(normal.sse, len);
        Self {
            policy,
            params: PolicyParams::from_raw(policy, p),
            start: State5::new(p[X0], p[Y0], p[TH0], p[V], p[W0]),
            log_likelihood,
            bic_evidence: bic(log_likelihood, policy, len),
            sse: normal.sse_channels,
            len,
            degenerate,
        }
    }

    pub fn total_sse(&self) -> f64 {
        self.sse.iter().sum()
    }

    /// State at the last sample of the fitted segment.
    pub fn end_state(&self, dt: f64) -> State5 {
        if self.len < 2 {
            return self.start;
        }
        let rollout =
            forward_simulate(&self.params, &self.start, self.len - 1, dt).expect("segment of at least two samples");
        rollout.samples[self.len - 2]
    }
}

/// `ll - k/2 ln(n)`.
pub fn bic(log_likelihood: f64, policy: PolicyKind, len: usize) -> f64 {
    log_likelihood - 0.5 * policy.num_params() as f64 * (len as f64).ln()
}

/// Rolls `n_steps` states forward from `start` under `params`. The speed and
/// yaw rate of `start` are ignored in favour of the policy's.
pub fn forward_simulate(params: &PolicyParams, start: &State5, n_steps: usize, dt: f64) -> Result<Trajectory<State5>> {
    forward_simulate_capped(params, start, n_steps, dt, None)
}

/// [`forward_simulate`] with the yaw-rate magnitude limited to `w_cap`.
pub fn forward_simulate_capped(
    params: &PolicyParams,
    start: &State5,
    n_steps: usize,
    dt: f64,
    w_cap: Option<f64>,
) -> Result<Trajectory<State5>> {
    if n_steps == 0 {
        return Err(Error::Domain("forward simulation needs at least one step".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let yaw = |k: usize| {
        let w = params.yaw_rate_at(k as f64 * dt);
        match w_cap {
            Some(cap) => w.clamp(-cap, cap),
            None => w,
        }
    };
    let mut cur = State5 {
        v: params.speed(),
        w: yaw(0),
        ..*start
    };
    let mut out = Vec::with_capacity(n_steps);
    for k in 1..=n_steps {
        let mut next = ctrv_step(&cur, dt);
        next.w = yaw(k);
        out.push(next);
        cur = next;
    }
    Ok(Trajectory::new(dt, dt, out))
}

fn check_segment(segment: &Trajectory<Measurement3>) -> Result<()> {
    if segment.len() < 2 {
        return Err(Error::Domain(format!(
            "policy fit needs at least two samples, got {}",
            segment.len()
        )));
    }
    if !(segment.dt > 0.0 && segment.dt.is_finite()) {
        return Err(Error::Domain(format!(
            "segment dt must be positive, got {}",
            segment.dt
        )));
    }
    if let Some(i) = segment
        .iter()
        .position(|o| !(o.x.is_finite() && o.y.is_finite() && o.theta.is_finite()))
    {
        return Err(Error::Domain(format!("non-finite observation at sample {i}")));
    }
    Ok(())
}

fn is_degenerate(obs: &[Measurement3]) -> bool {
    let o = obs[0];
    obs.iter().all(|p| (p.x - o.x).hypot(p.y - o.y) <= 1e-12)
}

fn degenerate_params(obs: &[Measurement3]) -> Params {
    let (s, c) = obs
        .iter()
        .fold((0.0, 0.0), |(s, c), o| (s + o.theta.sin(), c + o.theta.cos()));
    [obs[0].x, obs[0].y, wrap_angle(s.atan2(c)), 0.0, 0.0, 0.0]
}

/// Best lane-keep fit over several starting points.
pub(crate) fn cold_fit_lane_keep(obs: &[Measurement3], dt: f64) -> (Params, Normal) {
    let seeds = [fit::constant_turn_seed(obs, dt), fit::heading_channel_seed(obs, dt)];
    best_of(obs, dt, &seeds, false)
}

/// Best merge fit, always including the lane-keep optimum as a start so the
/// nested model never fits worse.
pub(crate) fn cold_fit_merge(obs: &[Measurement3], dt: f64, lane_keep: &Params) -> (Params, Normal) {
    let mut seeds = vec![*lane_keep];
    if let Some(s) = fit::ramp_seed(obs, dt) {
        seeds.push(s);
    }
    best_of(obs, dt, &seeds, true)
}

fn best_of(obs: &[Measurement3], dt: f64, seeds: &[Params], merge: bool) -> (Params, Normal) {
    let mut best: Option<(Params, Normal)> = None;
    for seed in seeds {
        let cand = fit::refine(obs, dt, *seed, merge);
        if best.as_ref().is_none_or(|b| cand.1.sse < b.1.sse) {
            best = Some(cand);
        }
    }
    best.expect("at least one seed")
}

/// Maximum-likelihood fit of one policy to `segment`. The start pose is
/// fitted alongside the policy parameters.
pub fn fit_policy(segment: &Trajectory<Measurement3>, policy: PolicyKind, spec: &LikelihoodSpec) -> Result<PolicyFit> {
    Ok(match policy {
        PolicyKind::LaneKeep => classify_segment(segment, spec)?.lane_keep,
        PolicyKind::Merge => classify_segment(segment, spec)?.merge,
    })
}

/// Both policy fits of a segment and the preferred one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub policy: PolicyKind,
    pub lane_keep: PolicyFit,
    pub merge: PolicyFit,
}

impl Classification {
    pub fn fit(&self, kind: PolicyKind) -> &PolicyFit {
        match kind {
            PolicyKind::LaneKeep => &self.lane_keep,
            PolicyKind::Merge => &self.merge,
        }
    }

    pub fn best(&self) -> &PolicyFit {
        self.fit(self.policy)
    }
}

/// Fits both policies and picks the higher BIC; ties go to lane keep.
pub fn classify_segment(segment: &Trajectory<Measurement3>, spec: &LikelihoodSpec) -> Result<Classification> {
    spec.validate()?;
    check_segment(segment)?;
    let obs = &segment.samples;
    let dt = segment.dt;
    let n = obs.len();

    let (lk, mg, degenerate) = if is_degenerate(obs) {
        let p = degenerate_params(obs);
        let normal = fit::evaluate(obs, dt, &p, false, false);
        ((p, normal), (p, normal), true)
    } else {
        let lk = cold_fit_lane_keep(obs, dt);
        let mg = cold_fit_merge(obs, dt, &lk.0);
        (lk, mg, false)
    };
    let lane_keep = PolicyFit::from_raw(PolicyKind::LaneKeep, &lk.0, &lk.1, n, spec, degenerate);
    let merge = PolicyFit::from_raw(PolicyKind::Merge, &mg.0, &mg.1, n, spec, degenerate);
    let policy = if merge.bic_evidence > lane_keep.bic_evidence {
        PolicyKind::Merge
    } else {
        PolicyKind::LaneKeep
    };
    Ok(Classification {
        policy,
        lane_keep,
        merge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_route_path, observe, RoundaboutGeometry, Route};
    use crate::ukf::MeasurementSpec;

    fn poses(states: &Trajectory<State5>, start: &State5) -> Trajectory<Measurement3> {
        let mut samples = vec![Measurement3::from_state(start)];
        samples.extend(states.iter().map(Measurement3::from_state));
        Trajectory::new(0.0, states.dt, samples)
    }

    #[test]
    fn straight_rollout_length() {
        let p = PolicyParams::LaneKeep { v: 8.0, w: 0.0 };
        let t = forward_simulate(&p, &State5::default(), 30, 0.1).unwrap();
        assert_eq!(t.len(), 30);
        let end = t.samples[29];
        assert!((end.x - 30.0 * 0.1 * 8.0).abs() < 1e-12 && end.y.abs() < 1e-12);
        assert!(forward_simulate(&p, &State5::default(), 0, 0.1).is_err());
    }

    #[test]
    fn constant_turn_stays_on_circle() {
        let radius = 15.0;
        let p = PolicyParams::LaneKeep {
            v: 8.0,
            w: 8.0 / radius,
        };
        let start = State5::new(radius, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        for s in forward_simulate(&p, &start, 500, 0.1).unwrap().iter() {
            assert!((s.x.hypot(s.y) - radius).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_heading_matches_continuous_integral() {
        let c = 0.2;
        let (n, dt) = (40, 0.1);
        let p = PolicyParams::Merge {
            v: 8.0,
            w0: 0.0,
            w_dot: c,
        };
        let t = forward_simulate(&p, &State5::default(), n, dt).unwrap();
        let horizon = n as f64 * dt;
        let theta = t.samples[n - 1].theta;
        assert!((theta - 0.5 * c * horizon * horizon).abs() <= c * dt * horizon);
    }

    #[test]
    fn lane_keep_round_trip() {
        let start = State5::new(2.0, -1.0, 0.3, 0.0, 0.0);
        let p = PolicyParams::LaneKeep { v: 8.0, w: 0.5 };
        let seg = poses(&forward_simulate(&p, &start, 39, 0.1).unwrap(), &start);
        let spec = LikelihoodSpec::default();
        let c = classify_segment(&seg, &spec).unwrap();
        let PolicyParams::LaneKeep { v, w } = c.lane_keep.params else {
            panic!()
        };
        assert!((v - 8.0).abs() < 1e-3 && (w - 0.5).abs() < 1e-3);
        assert!(c.lane_keep.total_sse() < 1e-9);

        let PolicyParams::Merge { w_dot, .. } = c.merge.params else {
            panic!()
        };
        assert!(w_dot.abs() < 1e-6);
        assert!((c.merge.log_likelihood - c.lane_keep.log_likelihood).abs() < 1e-6);
        let gap = c.lane_keep.bic_evidence - c.merge.bic_evidence;
        assert!(gap > 0.0);
        assert!((gap - 0.5 * (40f64).ln()).abs() < 1e-6);
        assert_eq!(c.policy, PolicyKind::LaneKeep);
    }

    #[test]
    fn scenario_segments_classify() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 2)).unwrap();
        let z = t.poses();
        let expected = [
            PolicyKind::LaneKeep,
            PolicyKind::Merge,
            PolicyKind::LaneKeep,
            PolicyKind::Merge,
            PolicyKind::LaneKeep,
        ];
        for (&(a, b), want) in t.segments().iter().zip(expected) {
            let c = classify_segment(&z.slice(a, b), &LikelihoodSpec::default()).unwrap();
            assert_eq!(c.policy, want, "segment {a}..{b}");
        }
        // The ring is lane keep at a nonzero yaw rate.
        let (a, b) = t.segments()[2];
        let ring = classify_segment(&z.slice(a, b), &LikelihoodSpec::default()).unwrap();
        let PolicyParams::LaneKeep { w, .. } = ring.lane_keep.params else {
            panic!()
        };
        assert!((w - 8.0 / 15.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_ring_yaw_rate_is_unbiased() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 2)).unwrap();
        let (a, b) = t.segments()[2];
        let spec = LikelihoodSpec::default();
        let ws: Vec<f64> = (0..50)
            .map(|seed| {
                let z = observe(&t, &MeasurementSpec::default(), seed).unwrap();
                match fit_policy(&z.slice(a, b), PolicyKind::LaneKeep, &spec).unwrap().params {
                    PolicyParams::LaneKeep { w, .. } => w,
                    _ => unreachable!(),
                }
            })
            .collect();
        let mean = ws.iter().sum::<f64>() / 50.0;
        let sd = (ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
        let stderr = sd / 50f64.sqrt();
        assert!((mean - 8.0 / 15.0).abs() < 3.0 * stderr, "mean {mean} stderr {stderr}");
    }

    #[test]
    fn degenerate_segment() {
        let seg = Trajectory::new(0.0, 0.1, vec![Measurement3::new(1.0, 1.0, 0.2); 30]);
        let c = classify_segment(&seg, &LikelihoodSpec::default()).unwrap();
        assert!(c.lane_keep.degenerate);
        assert_eq!(c.lane_keep.params, PolicyParams::LaneKeep { v: 0.0, w: 0.0 });
        assert!((c.lane_keep.start.theta - 0.2).abs() < 1e-12);
        assert_eq!(c.policy, PolicyKind::LaneKeep);
    }

    #[test]
    fn short_or_invalid_segments_rejected() {
        let spec = LikelihoodSpec::default();
        let one = Trajectory::new(0.0, 0.1, vec![Measurement3::default()]);
        assert!(classify_segment(&one, &spec).is_err());
        let nan = Trajectory::new(
            0.0,
            0.1,
            vec![Measurement3::default(), Measurement3::new(f64::NAN, 0.0, 0.0)],
        );
        assert!(classify_segment(&nan, &spec).is_err());
        assert!(LikelihoodSpec::new(0.0).is_err());
    }
}
