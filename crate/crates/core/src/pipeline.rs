//! Filter, segment, classify and predict: the combined online system for one
//! tracked vehicle.

use crate::changepoint::{segment_series, ChampConfig, ViterbiPath};
use crate::error::{Error, Result};
use crate::motion_model::State5;
use crate::policy::{classify_segment, forward_simulate_capped, PolicyFit, PolicyKind};
use crate::scenario::LabeledTrajectory;
use crate::trajectory::{Measurement3, Trajectory};
use crate::ukf::{belief_poses, filter_trajectory, FilterConfig, GaussianState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionConfig {
    /// Prediction span in seconds.
    pub horizon: f64,
    pub dt: f64,
    /// Segment the UKF-filtered poses instead of the raw measurements.
    pub use_filter: bool,
    /// Ring radius of the known intersection; caps merge yaw rates at `v / r`.
    pub ring_radius: Option<f64>,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            dt: 0.1,
            use_filter: true,
            ring_radius: None,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(r) = self.ring_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("ring radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// Number of predicted states, at least one.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// Every stage's settings in one place.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub champ: ChampConfig,
    pub prediction: PredictionConfig,
    /// Initial speed guess for the filter; `None` uses the default belief.
    pub init_speed: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub current_policy: PolicyKind,
    pub current_fit: PolicyFit,
    /// Fit of the policy that was not selected for the current segment.
    pub alternative_fit: PolicyFit,
    pub estimated_state: GaussianState,
    pub predicted: Trajectory<State5>,
    pub path: ViterbiPath,
    /// Full filter output, one belief per observation.
    pub beliefs: Trajectory<GaussianState>,
}

/// Runs the whole system on `z_series` and predicts the horizon after its
/// last sample.
pub fn predict_trajectory(z_series: &Trajectory<Measurement3>, cfg: &PipelineConfig) -> Result<PredictionResult> {
    cfg.prediction.validate()?;
    cfg.champ.validate()?;
    let min = cfg.champ.prior.min_len.max(2);
    if z_series.len() < min {
        return Err(Error::Pipeline(format!(
            "need at least {min} observations, got {}",
            z_series.len()
        )));
    }

    let first = &z_series[0];
    let init = match cfg.init_speed {
        Some(v) => GaussianState::init_with_speed(first, v),
        None => GaussianState::default_init(first),
    };
    let beliefs = filter_trajectory(z_series, &init, &cfg.filter)?;
    let poses = if cfg.prediction.use_filter {
        belief_poses(&beliefs)
    } else {
        z_series.clone()
    };

    let path = segment_series(&poses, &cfg.champ)?;
    let (start, end) = *path.segments(poses.len()).last().expect("at least one segment");
    let current_fit = *path.segment_fits.last().expect("one fit per segment");
    let current_policy = current_fit.policy;
    let alternative_fit =
        *classify_segment(&poses.slice(start, end), &cfg.champ.likelihood)?.fit(current_policy.other());

    let estimated_state = beliefs.samples.last().expect("non-empty").clone();
    let predicted = rollout(&current_fit, &estimated_state, &cfg.prediction)?;
    Ok(PredictionResult {
        current_policy,
        current_fit,
        alternative_fit,
        estimated_state,
        predicted,
        path,
        beliefs,
    })
}

/// Horizon rollout of `fit` from the filter's estimate: speed and yaw rate
/// come from the estimate, the yaw-rate trend from the fit.
pub fn rollout(fit: &PolicyFit, estimate: &GaussianState, cfg: &PredictionConfig) -> Result<Trajectory<State5>> {
    cfg.validate()?;
    let s = estimate.state();
    let params = fit.params.with_initial(s.v, s.w);
    let cap = match (fit.policy, cfg.ring_radius) {
        (PolicyKind::Merge, Some(r)) => Some(s.v.abs() / r),
        _ => None,
    };
    forward_simulate_capped(&params, &s, cfg.steps(), cfg.dt, cap)
}

/// The prediction the other policy would have made from the same estimate.
pub fn counterfactual_prediction(result: &PredictionResult, cfg: &PredictionConfig) -> Result<Trajectory<State5>> {
    rollout(&result.alternative_fit, &result.estimated_state, cfg)
}

/// Position error of each predicted state against `truth`, where
/// `predicted[0]` is aligned with sample `at + 1`.
pub fn evaluate_prediction(predicted: &Trajectory<State5>, truth: &LabeledTrajectory, at: usize) -> Result<Vec<f64>> {
    if predicted.is_empty() {
        return Err(Error::Range("prediction has no steps".into()));
    }
    let last = at + predicted.len();
    if last >= truth.len() {
        return Err(Error::Range(format!(
            "prediction from sample {at} over {} steps runs past the truth ({} samples)",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(predicted
        .iter()
        .zip(&truth.states.samples[at + 1..=last])
        .map(|(p, t)| p.position_distance(t))
        .collect())
}

pub fn mean_error(errors: &[f64]) -> f64 {
    errors.iter().sum::<f64>() / errors.len() as f64
}
