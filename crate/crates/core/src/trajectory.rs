//! Uniformly sampled time series shared by every stage of the pipeline.

use crate::motion_model::State5;

/// A pose observation `(x, y, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement3 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Measurement3 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Projection of a full state onto the observed pose.
    pub fn from_state(s: &State5) -> Self {
        Self {
            x: s.x,
            y: s.y,
            theta: s.theta,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// Samples taken every `dt` seconds starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(t0: f64, dt: f64, samples: Vec<T>) -> Self {
        Self { t0, dt, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.samples.iter()
    }

    /// Same timing, new sample values.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Trajectory<U> {
        Trajectory {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(f).collect(),
        }
    }

    /// Sub-series `[start, end)` with its time origin shifted accordingly.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory<T>
    where
        T: Clone,
    {
        Trajectory {
            t0: self.time(start),
            dt: self.dt,
            samples: self.samples[start..end].to_vec(),
        }
    }
}

impl<T> std::ops::Index<usize> for Trajectory<T> {
    type Output = T;

    fn index(&self, index: usize) -> &T {
        &self.samples[index]
    }
}
