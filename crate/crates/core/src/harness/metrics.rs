//! Tracking-error metrics of an estimate against the ground truth.

use std::fmt;

use crate::error::{Error, Result};
use crate::motion_model::State5;
use crate::scenario::LabeledTrajectory;
use crate::trajectory::Trajectory;

pub const DEFAULT_BURN_IN: usize = 20;

/// Per-axis and Euclidean position errors (m), averaged and maximised over
/// the samples after `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Error along y.
    pub avg_lat_err: f64,
    pub max_lat_err: f64,
    /// Error along x.
    pub avg_lon_err: f64,
    pub max_lon_err: f64,
    pub avg_euclid: f64,
    pub max_euclid: f64,
    pub burn_in: usize,
}

impl MetricsReport {
    /// `(name, value)` for every metric, in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("avg_lat_err", self.avg_lat_err),
            ("max_lat_err", self.max_lat_err),
            ("avg_lon_err", self.avg_lon_err),
            ("max_lon_err", self.max_lon_err),
            ("avg_euclid", self.avg_euclid),
            ("max_euclid", self.max_euclid),
        ]
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = format!("{prefix}burn_in={}\n", self.burn_in);
        for (k, v) in self.entries() {
            out.push_str(&format!("{prefix}{k}={v:.16e}\n"));
        }
        out
    }

    /// Mean of several reports, metric by metric (maxima are maxed).
    pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Alignment("no reports to aggregate".into()))?;
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let max = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
        Ok(MetricsReport {
            avg_lat_err: mean(|r| r.avg_lat_err),
            max_lat_err: max(|r| r.max_lat_err),
            avg_lon_err: mean(|r| r.avg_lon_err),
            max_lon_err: max(|r| r.max_lon_err),
            avg_euclid: mean(|r| r.avg_euclid),
            max_euclid: max(|r| r.max_euclid),
            burn_in: first.burn_in,
        })
    }
}

impl fmt::Display for MetricsReport {
    /// Aligned two-column table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>12}", "metric", "value (m)")?;
        for (k, v) in self.entries() {
            writeln!(f, "{k:<14} {v:>12.6}")?;
        }
        write!(f, "{:<14} {:>12}", "burn_in", self.burn_in)
    }
}

pub fn compute_metrics(
    truth: &LabeledTrajectory,
    estimate: &Trajectory<State5>,
    burn_in: usize,
) -> Result<MetricsReport> {
    if truth.len() != estimate.len() {
        return Err(Error::Alignment(format!(
            "truth has {} samples, estimate has {}",
            truth.len(),
            estimate.len()
        )));
    }
    if burn_in >= truth.len() {
        return Err(Error::Alignment(format!(
            "burn-in of {burn_in} samples leaves nothing of {}",
            truth.len()
        )));
    }
    let mut sum = [0.0; 3];
    let mut max = [0.0f64; 3];
    for (t, e) in truth.states.iter().zip(estimate.iter()).skip(burn_in) {
        let lat = (e.y - t.y).abs();
        let lon = (e.x - t.x).abs();
        let errs = [lat, lon, lat.hypot(lon)];
        for k in 0..3 {
            sum[k] += errs[k];
            max[k] = max[k].max(errs[k]);
        }
    }
    let n = (truth.len() - burn_in) as f64;
    Ok(MetricsReport {
        avg_lat_err: sum[0] / n,
        max_lat_err: max[0],
        avg_lon_err: sum[1] / n,
        max_lon_err: max[1],
        avg_euclid: sum[2] / n,
        max_euclid: max[2],
        burn_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_route_path, RoundaboutGeometry, Route};

    fn truth() -> LabeledTrajectory {
        build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 1)).unwrap()
    }

    #[test]
    fn identical_estimate_scores_zero() {
        let t = truth();
        let r = compute_metrics(&t, &t.states, 0).unwrap();
        assert!(r.entries().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn constant_offset_is_pythagorean() {
        let t = truth();
        let est = t.states.map(|s| State5 {
            x: s.x + 0.3,
            y: s.y + 0.4,
            ..*s
        });
        let r = compute_metrics(&t, &est, DEFAULT_BURN_IN).unwrap();
        for (got, want) in [
            (r.avg_lat_err, 0.4),
            (r.max_lat_err, 0.4),
            (r.avg_lon_err, 0.3),
            (r.max_lon_err, 0.3),
            (r.avg_euclid, 0.5),
            (r.max_euclid, 0.5),
        ] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn burn_in_excludes_early_samples() {
        let t = truth();
        let mut est = t.states.clone();
        est.samples[0].x += 10.0;
        assert_eq!(compute_metrics(&t, &est, 1).unwrap().max_lon_err, 0.0);
        assert!((compute_metrics(&t, &est, 0).unwrap().max_lon_err - 10.0).abs() < 1e-9);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let t = truth();
        let short = t.states.slice(0, 10);
        assert!(matches!(compute_metrics(&t, &short, 0), Err(Error::Alignment(_))));
        assert!(matches!(
            compute_metrics(&t, &t.states, t.len()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn key_value_output_lists_every_metric() {
        let t = truth();
        let kv = compute_metrics(&t, &t.states, 5).unwrap().to_key_values("");
        assert_eq!(kv.lines().count(), 7);
        assert!(kv.contains("avg_euclid=0.0000000000000000e0"));
    }
}
