//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown keys are errors. Every
//! module default can be overridden:
//!
//! ```text
//! # tighter measurement noise
//! measurement.sigma_nx = 0.04
//! champ.sigma_lik = 0.2
//! prediction.horizon = 3
//! ```

use std::path::Path;

use crate::changepoint::ChampConfig;
use crate::error::{Error, Result};
use crate::harness::io::read_to_string;
use crate::harness::metrics::DEFAULT_BURN_IN;
use crate::motion_model::ProcessNoiseSpec;
use crate::pipeline::{PipelineConfig, PredictionConfig};
use crate::scenario::RoundaboutGeometry;
use crate::ukf::{FilterConfig, Kappa, MeasurementSpec, UtConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: RoundaboutGeometry,
    pub cruise_speed: f64,
    pub dt: f64,
    /// Noise added to the generated truth.
    pub process: ProcessNoiseSpec,
    pub measurement: MeasurementSpec,
    /// Process noise assumed by the filter.
    pub filter_process: ProcessNoiseSpec,
    pub ut: UtConfig,
    pub champ: ChampConfig,
    pub prediction: PredictionConfig,
    pub init_speed: Option<f64>,
    pub burn_in: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let geometry = RoundaboutGeometry::default();
        Self {
            prediction: PredictionConfig {
                ring_radius: Some(geometry.ring_radius),
                ..Default::default()
            },
            geometry,
            cruise_speed: 8.0,
            dt: 0.1,
            process: ProcessNoiseSpec::default(),
            measurement: MeasurementSpec::default(),
            filter_process: ProcessNoiseSpec::default(),
            ut: UtConfig::default(),
            champ: ChampConfig::default(),
            init_speed: None,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

fn num(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: `{value}` is not a non-negative integer")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: `{value}` is not a boolean"))),
    }
}

fn optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "none" | "" => Ok(None),
        _ => num(key, value).map(Some),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "geometry.center_x" => self.geometry.center.0 = num(key, value)?,
            "geometry.center_y" => self.geometry.center.1 = num(key, value)?,
            "geometry.ring_radius" => {
                self.geometry.ring_radius = num(key, value)?;
                self.prediction.ring_radius = Some(self.geometry.ring_radius);
            }
            "geometry.leg_length" => self.geometry.leg_length = num(key, value)?,
            "geometry.transition_length" => self.geometry.transition_length = num(key, value)?,
            "geometry.leg_angles" => {
                self.geometry.leg_angles = value.split(',').map(|a| num(key, a.trim())).collect::<Result<_>>()?
            }
            "route.cruise_speed" => self.cruise_speed = num(key, value)?,
            "route.dt" => {
                self.dt = num(key, value)?;
                self.prediction.dt = self.dt;
            }
            "process.sigma_va" => self.process.sigma_va = num(key, value)?,
            "process.sigma_vw" => self.process.sigma_vw = num(key, value)?,
            "measurement.sigma_nx" => self.measurement.sigma_nx = num(key, value)?,
            "measurement.sigma_ny" => self.measurement.sigma_ny = num(key, value)?,
            "measurement.sigma_ntheta" => self.measurement.sigma_ntheta = num(key, value)?,
            "filter.sigma_va" => self.filter_process.sigma_va = num(key, value)?,
            "filter.sigma_vw" => self.filter_process.sigma_vw = num(key, value)?,
            "filter.init_speed" => self.init_speed = optional(key, value)?,
            "ut.alpha" => self.ut.alpha = num(key, value)?,
            "ut.beta" => self.ut.beta = num(key, value)?,
            "ut.kappa" => {
                self.ut.kappa = match value {
                    "3-n" => Kappa::ThreeMinusN,
                    _ => Kappa::Value(num(key, value)?),
                }
            }
            "champ.mu_len" => self.champ.prior.mu_len = num(key, value)?,
            "champ.sigma_len" => self.champ.prior.sigma_len = num(key, value)?,
            "champ.min_len" => self.champ.prior.min_len = count(key, value)?,
            "champ.sigma_lik" => self.champ.likelihood.sigma_lik = num(key, value)?,
            "champ.prune_margin" => self.champ.prune_margin = num(key, value)?,
            "champ.max_candidates" => self.champ.max_candidates = count(key, value)?,
            "champ.prune_after" => self.champ.prune_after = count(key, value)?,
            "prediction.horizon" => self.prediction.horizon = num(key, value)?,
            "prediction.use_filter" => self.prediction.use_filter = flag(key, value)?,
            "prediction.ring_radius" => self.prediction.ring_radius = optional(key, value)?,
            "metrics.burn_in" => self.burn_in = count(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.process.validate()?;
        self.measurement.validate()?;
        self.filter_process.validate()?;
        self.ut.validate()?;
        self.champ.validate()?;
        self.prediction.validate()?;
        if !(self.cruise_speed > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("cruise speed and dt must be positive".into()));
        }
        Ok(())
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            process: self.filter_process,
            measurement: self.measurement,
            ut: self.ut,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            filter: self.filter(),
            champ: self.champ.clone(),
            prediction: self.prediction,
            init_speed: self.init_speed,
        }
    }
}
