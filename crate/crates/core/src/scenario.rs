//! Synthetic roundabout traversals with per-sample policy labels.
//!
//! A route is composed of five pieces: straight approach, entry transition,
//! ring arc, exit transition and straight exit. Transitions ramp the yaw rate
//! linearly between zero and the ring rate `v / R`, so the path is continuous
//! in position, heading and yaw rate. Traffic circulates counter-clockwise.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::motion_model::{ctrv_step, ctrv_step_noisy, wrap_angle, ProcessNoiseSpec, State5};
use crate::policy::PolicyKind;
use crate::trajectory::{Measurement3, Trajectory};
use crate::ukf::MeasurementSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundaboutGeometry {
    pub center: (f64, f64),
    pub ring_radius: f64,
    /// Bearings (from the centre) at which each leg meets the ring.
    pub leg_angles: Vec<f64>,
    /// Length of each leg: straight part plus transition (m).
    pub leg_length: f64,
    /// Length of the yaw-rate ramp joining a leg to the ring (m).
    pub transition_length: f64,
}

impl Default for RoundaboutGeometry {
    fn default() -> Self {
        Self {
            center: (0.0, 0.0),
            ring_radius: 15.0,
            leg_angles: vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
            leg_length: 80.0,
            transition_length: 40.0,
        }
    }
}

impl RoundaboutGeometry {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center.0.is_finite()
            && self.center.1.is_finite()
            && self.ring_radius.is_finite()
            && self.leg_length.is_finite()
            && self.transition_length.is_finite();
        if !finite || self.ring_radius <= 0.0 {
            return Err(Error::Config(format!(
                "ring radius must be positive and finite, got {}",
                self.ring_radius
            )));
        }
        if self.leg_angles.is_empty() {
            return Err(Error::Config("geometry needs at least one leg".into()));
        }
        for (i, a) in self.leg_angles.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("leg {i} has non-finite bearing")));
            }
            for b in &self.leg_angles[..i] {
                if wrap_angle(a - b).abs() < 1e-9 {
                    return Err(Error::Config(format!("leg {i} duplicates another bearing")));
                }
            }
        }
        if !(self.transition_length > 0.0 && self.transition_length < self.leg_length) {
            return Err(Error::Config(format!(
                "transition length {} must lie in (0, leg length {})",
                self.transition_length, self.leg_length
            )));
        }
        // A linear yaw-rate ramp of length L into a ring of radius R turns the
        // heading by L / (2R); beyond a right angle it no longer joins the leg.
        if self.transition_length / (2.0 * self.ring_radius) >= FRAC_PI_2 {
            return Err(Error::Config(format!(
                "transition of {} m is too long for a ring of radius {} m",
                self.transition_length, self.ring_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub entry_leg: usize,
    pub exit_leg: usize,
    pub cruise_speed: f64,
    pub dt: f64,
}

impl Route {
    pub fn new(entry_leg: usize, exit_leg: usize) -> Self {
        Self {
            entry_leg,
            exit_leg,
            cruise_speed: 8.0,
            dt: 0.1,
        }
    }

    pub fn validate(&self, geom: &RoundaboutGeometry) -> Result<()> {
        let legs = geom.leg_angles.len();
        if self.entry_leg >= legs || self.exit_leg >= legs {
            return Err(Error::Config(format!(
                "route {}:{} refers to a leg outside 0..{legs}",
                self.entry_leg, self.exit_leg
            )));
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed.is_finite()) {
            return Err(Error::Config(format!(
                "cruise speed must be positive, got {}",
                self.cruise_speed
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Ground-truth states with the policy that generated each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub states: Trajectory<State5>,
    pub labels: Vec<PolicyKind>,
    /// Index of the last sample of every segment but the final one.
    pub changepoints: Vec<usize>,
}

impl LabeledTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.states.dt
    }

    /// `[start, end)` sample ranges of the labeled segments.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.changepoints.len() + 1);
        let mut start = 0;
        for &tau in &self.changepoints {
            out.push((start, tau + 1));
            start = tau + 1;
        }
        out.push((start, self.len()));
        out
    }

    pub fn poses(&self) -> Trajectory<Measurement3> {
        self.states.map(Measurement3::from_state)
    }
}

/// Sample counts of the five route pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteLayout {
    pub straight: usize,
    pub transition: usize,
    pub ring: usize,
}

impl RouteLayout {
    pub fn new(geom: &RoundaboutGeometry, route: &Route) -> Result<Self> {
        geom.validate()?;
        route.validate(geom)?;
        let step = route.cruise_speed * route.dt;
        let straight = ((geom.leg_length - geom.transition_length) / step).round() as usize;
        let transition = (geom.transition_length / step).round() as usize;
        let phi_in = geom.leg_angles[route.entry_leg];
        let phi_out = geom.leg_angles[route.exit_leg];
        let mut sweep = (phi_out - phi_in).rem_euclid(TAU);
        if sweep < 1e-9 {
            sweep = TAU;
        }
        let ring = (geom.ring_radius * sweep / step).round() as usize;
        if straight == 0 || transition == 0 || ring == 0 {
            return Err(Error::Config(format!(
                "route pieces must each span at least one sample at {step} m per sample"
            )));
        }
        Ok(Self {
            straight,
            transition,
            ring,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.straight + 2 * self.transition + self.ring
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First sample on the ring.
    pub fn ring_start(&self) -> usize {
        self.straight + self.transition
    }

    /// Nominal yaw rate and label of every sample.
    fn schedule(&self, ring_rate: f64) -> Vec<(f64, PolicyKind)> {
        let nt = self.transition as f64;
        let ramp = |i: usize| ring_rate * (i as f64 + 0.5) / nt;
        let mut out = Vec::with_capacity(self.len());
        out.extend((0..self.straight).map(|_| (0.0, PolicyKind::LaneKeep)));
        out.extend((0..self.transition).map(|i| (ramp(i), PolicyKind::Merge)));
        out.extend((0..self.ring).map(|_| (ring_rate, PolicyKind::LaneKeep)));
        out.extend((0..self.transition).map(|i| (ramp(self.transition - 1 - i), PolicyKind::Merge)));
        out.extend((0..self.straight).map(|_| (0.0, PolicyKind::LaneKeep)));
        out
    }
}

/// Noise-free labeled traversal of `route`.
///
/// The first ring sample is placed on the circle at the entry bearing with a
/// tangential heading; earlier samples are integrated backwards through the
/// entry transition and the approach, later ones forwards.
pub fn build_route_path(geom: &RoundaboutGeometry, route: &Route) -> Result<LabeledTrajectory> {
    let layout = RouteLayout::new(geom, route)?;
    let v = route.cruise_speed;
    let dt = route.dt;
    let ring_rate = v / geom.ring_radius;
    let schedule = layout.schedule(ring_rate);
    let n = schedule.len();
    let anchor = layout.ring_start();

    let phi = geom.leg_angles[route.entry_leg];
    let mut states = vec![State5::default(); n];
    states[anchor] = State5::new(
        geom.center.0 + geom.ring_radius * phi.cos(),
        geom.center.1 + geom.ring_radius * phi.sin(),
        phi + FRAC_PI_2,
        v,
        ring_rate,
    );
    for k in (0..anchor).rev() {
        let w = schedule[k].0;
        let next = State5 { w, ..states[k + 1] };
        let mut prev = ctrv_step(&next, -dt);
        prev.w = w;
        states[k] = prev;
    }
    for k in anchor..n - 1 {
        let mut next = ctrv_step(&states[k], dt);
        next.w = schedule[k + 1].0;
        states[k + 1] = next;
    }

    let labels: Vec<PolicyKind> = schedule.iter().map(|s| s.1).collect();
    let changepoints = (0..n - 1).filter(|&k| labels[k] != labels[k + 1]).collect();
    Ok(LabeledTrajectory {
        states: Trajectory::new(0.0, dt, states),
        labels,
        changepoints,
    })
}

/// Re-rolls `traj` through the noisy transition. Speed and yaw rate follow the
/// nominal profile plus an accumulated random walk; speed is clamped at zero.
pub fn inject_process_noise(traj: &LabeledTrajectory, spec: &ProcessNoiseSpec, seed: u64) -> Result<LabeledTrajectory> {
    spec.validate()?;
    if spec.sigma_va == 0.0 && spec.sigma_vw == 0.0 {
        return Ok(traj.clone());
    }
    let nominal = &traj.states.samples;
    let dt = traj.dt();
    let (sa, sw) = (spec.sigma_va.sqrt(), spec.sigma_vw.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(nominal.len());
    let Some(&first) = nominal.first() else {
        return Ok(traj.clone());
    };
    out.push(first);
    let (mut dv, mut dw) = (0.0, 0.0);
    for k in 0..nominal.len() - 1 {
        let va: f64 = sa * gauss(&mut rng);
        let vw: f64 = sw * gauss(&mut rng);
        let mut next = ctrv_step_noisy(&out[k], (va, vw), dt);
        dv += dt * va;
        dw += dt * vw;
        next.v = (nominal[k + 1].v + dv).max(0.0);
        next.w = nominal[k + 1].w + dw;
        out.push(next);
    }
    Ok(LabeledTrajectory {
        states: Trajectory::new(traj.states.t0, dt, out),
        labels: traj.labels.clone(),
        changepoints: traj.changepoints.clone(),
    })
}

/// Noisy pose observations of every state.
pub fn observe(traj: &LabeledTrajectory, meas: &MeasurementSpec, seed: u64) -> Result<Trajectory<Measurement3>> {
    meas.validate()?;
    let (sx, sy, st) = (meas.sigma_nx.sqrt(), meas.sigma_ny.sqrt(), meas.sigma_ntheta.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || gauss(&mut rng);
    Ok(traj.states.map(|s| {
        let nx = sx * draw();
        let ny = sy * draw();
        let nt = st * draw();
        Measurement3::new(s.x + nx, s.y + ny, wrap_angle(s.theta + nt))
    }))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Seeds for the two independent noise streams of one simulated run.
pub fn noise_seeds(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Truth with process noise plus its noisy observations.
pub fn simulate_route(
    geom: &RoundaboutGeometry,
    route: &Route,
    process: &ProcessNoiseSpec,
    meas: &MeasurementSpec,
    seed: u64,
) -> Result<(LabeledTrajectory, Trajectory<Measurement3>)> {
    let (process_seed, meas_seed) = noise_seeds(seed);
    let clean = build_route_path(geom, route)?;
    let truth = inject_process_noise(&clean, process, process_seed)?;
    let z = observe(&truth, meas, meas_seed)?;
    Ok((truth, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use PolicyKind::{LaneKeep, Merge};

    fn through() -> LabeledTrajectory {
        build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 2)).unwrap()
    }

    #[test]
    fn through_route_labels() {
        let t = through();
        let seg_labels: Vec<_> = t.segments().iter().map(|&(a, _)| t.labels[a]).collect();
        assert_eq!(seg_labels, [LaneKeep, Merge, LaneKeep, Merge, LaneKeep]);
        assert_eq!(t.changepoints.len(), 4);
        for &(a, b) in &t.segments() {
            assert!(t.labels[a..b].iter().all(|&l| l == t.labels[a]));
        }
    }

    #[test]
    fn ring_yaw_rate_and_radius() {
        let geom = RoundaboutGeometry::default();
        let t = through();
        let (a, b) = t.segments()[2];
        for s in &t.states.samples[a..b] {
            assert_eq!(s.w, 8.0 / 15.0);
            assert!((s.x.hypot(s.y) - 15.0).abs() < 1e-9);
        }
        assert!(geom.validate().is_ok());
    }

    #[test]
    fn consecutive_states_follow_ctrv() {
        let t = through();
        for k in 0..t.len() - 1 {
            let p = ctrv_step(&t.states[k], t.dt());
            let q = &t.states[k + 1];
            assert!(p.position_distance(q) < 1e-9, "sample {k}");
            assert!(wrap_angle(p.theta - q.theta).abs() < 1e-9);
            assert_eq!(q.v, 8.0);
        }
    }

    #[test]
    fn approach_meets_ring_tangentially() {
        // Independent summation of chord displacements from the end of the
        // straight approach through the entry ramp.
        let geom = RoundaboutGeometry::default();
        let route = Route::new(1, 3);
        let t = build_route_path(&geom, &route).unwrap();
        let layout = RouteLayout::new(&geom, &route).unwrap();
        let last_straight = t.states[layout.straight - 1];
        let (v, dt, rr): (f64, f64, f64) = (8.0, 0.1, 8.0 / 15.0);
        let (mut x, mut y, mut th) = (last_straight.x, last_straight.y, last_straight.theta);
        let mut w = 0.0;
        for i in 0..=layout.transition {
            let half = w * dt / 2.0;
            let chord = if w == 0.0 { v * dt } else { 2.0 * v / w * half.sin() };
            x += chord * (th + half).cos();
            y += chord * (th + half).sin();
            th += w * dt;
            if i < layout.transition {
                w = rr * (i as f64 + 0.5) / layout.transition as f64;
            }
        }
        let phi = geom.leg_angles[1];
        assert!((x - 15.0 * phi.cos()).abs() < 1e-6 && (y - 15.0 * phi.sin()).abs() < 1e-6);
        assert!(wrap_angle(th - phi - FRAC_PI_2).abs() < 1e-6);
        // The straight approach is tangent to the ramp: zero yaw rate, heading
        // continuous into the transition.
        assert_eq!(last_straight.w, 0.0);
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let mut g = RoundaboutGeometry {
            transition_length: 90.0,
            ..Default::default()
        };
        assert!(matches!(build_route_path(&g, &Route::new(0, 1)), Err(Error::Config(_))));
        g.transition_length = 48.0;
        g.leg_length = 100.0;
        assert!(build_route_path(&g, &Route::new(0, 1)).is_err());
        assert!(build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 9)).is_err());
        g = RoundaboutGeometry::default();
        g.leg_angles = vec![0.0, TAU];
        assert!(g.validate().is_err());
    }

    #[test]
    fn full_loop_route() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(2, 2)).unwrap();
        let (a, b) = t.segments()[2];
        assert_eq!(b - a, (15.0 * TAU / 0.8_f64).round() as usize);
    }

    #[test]
    fn zero_process_noise_is_identity() {
        let t = through();
        assert_eq!(inject_process_noise(&t, &ProcessNoiseSpec::zero(), 3).unwrap(), t);
    }

    #[test]
    fn speed_increment_variance() {
        let geom = RoundaboutGeometry {
            leg_length: 4000.0,
            transition_length: 8.0,
            ..Default::default()
        };
        let t = build_route_path(&geom, &Route::new(0, 2)).unwrap();
        assert!(t.len() >= 10_000);
        let noisy = inject_process_noise(&t, &ProcessNoiseSpec::default(), 11).unwrap();
        let inc: Vec<f64> = noisy.states.samples.windows(2).map(|p| p[1].v - p[0].v).collect();
        let mean = inc.iter().sum::<f64>() / inc.len() as f64;
        let var = inc.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (inc.len() - 1) as f64;
        let expected = 0.1 * 0.1 * 0.01;
        assert!((var / expected - 1.0).abs() < 0.2, "var {var}");
        assert_eq!(noisy.labels, t.labels);
        assert_eq!(noisy.changepoints, t.changepoints);
    }

    #[test]
    fn observation_noise_scale() {
        let geom = RoundaboutGeometry {
            leg_length: 4000.0,
            transition_length: 8.0,
            ..Default::default()
        };
        let t = build_route_path(&geom, &Route::new(0, 2)).unwrap();
        let z = observe(&t, &MeasurementSpec::default(), 5).unwrap();
        let dx: Vec<f64> = z.iter().zip(t.states.iter()).map(|(o, s)| o.x - s.x).collect();
        let mean = dx.iter().sum::<f64>() / dx.len() as f64;
        let std = (dx.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (dx.len() - 1) as f64).sqrt();
        assert!((0.45..=0.55).contains(&std), "std {std}");
        assert!(z.iter().all(|o| o.theta > -PI && o.theta <= PI));

        let exact = observe(&t, &MeasurementSpec::zero(), 5).unwrap();
        assert_eq!(exact, t.poses());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let geom = RoundaboutGeometry::default();
        let route = Route::new(3, 1);
        let spec = (ProcessNoiseSpec::default(), MeasurementSpec::default());
        let a = simulate_route(&geom, &route, &spec.0, &spec.1, 42).unwrap();
        let b = simulate_route(&geom, &route, &spec.0, &spec.1, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_route(&geom, &route, &spec.0, &spec.1, 43).unwrap();
        assert_ne!(a.1, c.1);
    }
}
