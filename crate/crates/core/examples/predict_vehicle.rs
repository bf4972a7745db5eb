//! End-to-end prediction: filter, segment, pick the current policy and roll
//! it forward 2 s, next to the counterfactual policy.

use vehicle_prediction::motion_model::ProcessNoiseSpec;
use vehicle_prediction::pipeline::{
    counterfactual_prediction, evaluate_prediction, mean_error, predict_trajectory, PipelineConfig,
};
use vehicle_prediction::scenario::{simulate_route, RoundaboutGeometry, Route, RouteLayout};
use vehicle_prediction::ukf::MeasurementSpec;

fn main() -> vehicle_prediction::Result<()> {
    let geom = RoundaboutGeometry::default();
    let route = Route::new(0, 3);
    let layout = RouteLayout::new(&geom, &route)?;
    let (truth, z) = simulate_route(
        &geom,
        &route,
        &ProcessNoiseSpec::default(),
        &MeasurementSpec::default(),
        21,
    )?;

    let mut cfg = PipelineConfig::default();
    cfg.prediction.ring_radius = Some(geom.ring_radius);

    // Predict from 2 s before the end of each piece so the horizon stays in it.
    let points = [
        ("entry transition", layout.straight + layout.transition - 21),
        ("ring", layout.ring_start() + layout.ring - 21),
    ];
    for (name, at) in points {
        let result = predict_trajectory(&z.slice(0, at + 1), &cfg)?;
        let alt = counterfactual_prediction(&result, &cfg.prediction)?;
        let err = mean_error(&evaluate_prediction(&result.predicted, &truth, at)?);
        let alt_err = mean_error(&evaluate_prediction(&alt, &truth, at)?);
        println!("{name} (sample {at}, truth {}):", truth.labels[at]);
        println!("  segments {:?}", result.path.changepoints);
        println!(
            "  predicted {:<9} mean error {err:.3} m",
            result.current_policy.to_string()
        );
        println!(
            "  other     {:<9} mean error {alt_err:.3} m",
            result.current_policy.other().to_string()
        );
        let end = result.predicted.samples.last().expect("non-empty horizon");
        println!(
            "  position in 2 s: ({:.2}, {:.2}), truth ({:.2}, {:.2})",
            end.x,
            end.y,
            truth.states[at + 20].x,
            truth.states[at + 20].y
        );
    }
    Ok(())
}
