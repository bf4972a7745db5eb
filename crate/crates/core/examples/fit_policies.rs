//! Fits both driving policies to the pieces of a clean route and shows which
//! one the evidence prefers.

use vehicle_prediction::policy::{classify_segment, LikelihoodSpec};
use vehicle_prediction::scenario::{build_route_path, RoundaboutGeometry, Route};

fn main() -> vehicle_prediction::Result<()> {
    let truth = build_route_path(&RoundaboutGeometry::default(), &Route::new(3, 1))?;
    let poses = truth.poses();
    let spec = LikelihoodSpec::new(0.05)?;

    for (start, end) in truth.segments() {
        let c = classify_segment(&poses.slice(start, end), &spec)?;
        println!(
            "{start:>3}..{end:<3} truth {:<9} chosen {:<9} bic lane-keep {:>10.1} merge {:>10.1}",
            truth.labels[start].to_string(),
            c.policy.to_string(),
            c.lane_keep.bic_evidence,
            c.merge.bic_evidence
        );
        println!("           params {:?}", c.fit(c.policy).params);
    }
    Ok(())
}
