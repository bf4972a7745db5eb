//! Constant turn rate and velocity motion: a full circle closes on itself and
//! a straight drive needs no special casing.

use std::f64::consts::PI;

use vehicle_prediction::motion_model::{ctrv_step, process_cov, ProcessNoiseSpec, State5};

fn main() {
    let (radius, w) = (10.0, 0.2);
    let start = State5::new(0.0, 0.0, 0.0, radius * w, w);
    let steps = 100;
    let dt = 2.0 * PI / w / steps as f64;

    let mut s = start;
    for k in 1..=steps {
        s = ctrv_step(&s, dt);
        if k % 25 == 0 {
            println!("step {k:>3}: x {:>8.4} y {:>8.4} theta {:>7.4}", s.x, s.y, s.theta);
        }
    }
    println!("closure error after one lap: {:.2e} m", s.position_distance(&start));

    let straight = ctrv_step(&State5::new(0.0, 0.0, PI / 4.0, 10.0, 0.0), 1.0);
    println!("straight second at 45 deg: ({:.4}, {:.4})", straight.x, straight.y);

    let q = process_cov(0.0, 0.1, &ProcessNoiseSpec::default());
    println!("process covariance over 0.1 s:\n{q:.3e}");
}
