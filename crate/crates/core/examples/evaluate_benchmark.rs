//! The tracking benchmark: several seeded routes with default noise, scored
//! after the filter's burn-in.

use vehicle_prediction::harness::{compute_metrics, MetricsReport};
use vehicle_prediction::motion_model::ProcessNoiseSpec;
use vehicle_prediction::scenario::{simulate_route, RoundaboutGeometry, Route};
use vehicle_prediction::ukf::{belief_states, filter_with_default_init, FilterConfig, MeasurementSpec};

fn main() -> vehicle_prediction::Result<()> {
    let geom = RoundaboutGeometry::default();
    let mut reports = Vec::new();
    for (seed, route) in [Route::new(0, 2), Route::new(1, 3), Route::new(2, 1)]
        .into_iter()
        .enumerate()
    {
        let (truth, z) = simulate_route(
            &geom,
            &route,
            &ProcessNoiseSpec::default(),
            &MeasurementSpec::default(),
            seed as u64,
        )?;
        let est = belief_states(&filter_with_default_init(&z, &FilterConfig::default())?);
        let r = compute_metrics(&truth, &est, 20)?;
        println!(
            "route {}:{}  avg {:.3} m  max {:.3} m",
            route.entry_leg, route.exit_leg, r.avg_euclid, r.max_euclid
        );
        reports.push(r);
    }
    println!("\n{}", MetricsReport::aggregate(&reports)?);
    Ok(())
}
