//! Simulates one roundabout route and prints its labelled structure.
//!
//! `cargo run --example generate_route -- 1 3 42` drives from leg 1 to leg 3
//! with noise seed 42.

use vehicle_prediction::motion_model::ProcessNoiseSpec;
use vehicle_prediction::scenario::{simulate_route, RoundaboutGeometry, Route, RouteLayout};
use vehicle_prediction::ukf::MeasurementSpec;

fn main() -> vehicle_prediction::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (entry, exit, seed) = match args[..] {
        [a, b, s, ..] => (a, b, s as u64),
        [a, b] => (a, b, 7),
        _ => (0, 2, 7),
    };
    let geom = RoundaboutGeometry::default();
    let route = Route::new(entry, exit);
    let layout = RouteLayout::new(&geom, &route)?;
    let (truth, z) = simulate_route(
        &geom,
        &route,
        &ProcessNoiseSpec::default(),
        &MeasurementSpec::default(),
        seed,
    )?;

    println!(
        "route {entry}:{exit}, {} samples ({} straight, {} transition, {} ring)",
        truth.len(),
        layout.straight,
        layout.transition,
        layout.ring
    );
    for (start, end) in truth.segments() {
        println!("  samples {start:>3}..{end:<3} {}", truth.labels[start]);
    }
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "t", "x", "y", "z_x", "z_y");
    for k in (0..truth.len()).step_by(40) {
        let (s, m) = (truth.states[k], z[k]);
        println!(
            "{:>6.1} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            truth.states.time(k),
            s.x,
            s.y,
            m.x,
            m.y
        );
    }
    Ok(())
}
