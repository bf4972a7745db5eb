//! Online changepoint detection over a noisy route, on raw and on filtered
//! poses.

use vehicle_prediction::changepoint::{segment_series, ChampConfig, ChampDetector};
use vehicle_prediction::motion_model::ProcessNoiseSpec;
use vehicle_prediction::scenario::{simulate_route, RoundaboutGeometry, Route};
use vehicle_prediction::ukf::{belief_poses, filter_with_default_init, FilterConfig, MeasurementSpec};

fn main() -> vehicle_prediction::Result<()> {
    let geom = RoundaboutGeometry::default();
    let (truth, z) = simulate_route(
        &geom,
        &Route::new(2, 0),
        &ProcessNoiseSpec::zero(),
        &MeasurementSpec::default(),
        11,
    )?;
    let cfg = ChampConfig::default();
    println!("truth     changepoints {:?}", truth.changepoints);

    let raw = segment_series(&z, &cfg)?;
    println!(
        "raw       changepoints {:?} {:?}",
        raw.changepoints, raw.segment_policies
    );

    let filtered = belief_poses(&filter_with_default_init(&z, &FilterConfig::default())?);
    let path = segment_series(&filtered, &cfg)?;
    println!(
        "filtered  changepoints {:?} {:?}",
        path.changepoints, path.segment_policies
    );

    // The detector is online: feed samples one at a time and watch the most
    // recent changepoint hypothesis.
    let mut detector = ChampDetector::new(cfg, filtered.dt)?;
    for (k, o) in filtered.iter().enumerate() {
        detector.step(*o)?;
        if k % 50 == 49 {
            if let Some(h) = detector.best_hypothesis() {
                println!(
                    "after {:>3} samples: current segment starts at {:>3} ({})",
                    k + 1,
                    h.j,
                    h.policy
                );
            }
        }
    }
    Ok(())
}
