//! Tracks a noisy route with the unscented Kalman filter and shows how the
//! hidden speed and yaw rate converge from a wrong initial speed.

use vehicle_prediction::harness::compute_metrics;
use vehicle_prediction::motion_model::ProcessNoiseSpec;
use vehicle_prediction::scenario::{simulate_route, RoundaboutGeometry, Route};
use vehicle_prediction::ukf::{belief_states, filter_trajectory, FilterConfig, GaussianState, MeasurementSpec};

fn main() -> vehicle_prediction::Result<()> {
    let geom = RoundaboutGeometry::default();
    let (truth, z) = simulate_route(
        &geom,
        &Route::new(0, 2),
        &ProcessNoiseSpec::default(),
        &MeasurementSpec::default(),
        3,
    )?;

    let cfg = FilterConfig::default();
    let beliefs = filter_trajectory(&z, &GaussianState::init_with_speed(&z[0], 15.0), &cfg)?;

    println!(
        "{:>4} {:>7} {:>7} {:>7} {:>7} {:>8}",
        "k", "v", "v_hat", "w", "w_hat", "sd_w"
    );
    for k in [0, 5, 10, 20, 40, 80, 120, 160, 200] {
        let (t, b) = (truth.states[k], &beliefs[k]);
        let s = b.state();
        println!(
            "{k:>4} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>8.4}",
            t.v,
            s.v,
            t.w,
            s.w,
            b.cov[(4, 4)].sqrt()
        );
    }
    println!("\n{}", compute_metrics(&truth, &belief_states(&beliefs), 20)?);
    Ok(())
}
