//! Pushes a polar position estimate through the polar-to-Cartesian map with
//! the unscented transform and compares it with a Monte Carlo reference.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vehicle_prediction::ukf::{make_sigma_points, unscented_transform, GaussianState, UtConfig};

fn to_cartesian(p: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![p[0] * p[1].cos(), p[0] * p[1].sin()])
}

fn main() -> vehicle_prediction::Result<()> {
    let mean = DVector::from_vec(vec![20.0, 0.6]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.01]);
    let belief = GaussianState::new(mean.clone(), cov.clone())?;

    for cfg in [
        UtConfig::default(),
        UtConfig {
            alpha: 1.0,
            ..Default::default()
        },
    ] {
        let set = make_sigma_points(&belief, &cfg)?;
        let out = unscented_transform(&set, to_cartesian, &[])?;
        println!(
            "alpha {:<6} mean {:.4?} cov {:.4?}",
            cfg.alpha,
            out.mean.as_slice(),
            out.cov.as_slice()
        );
    }

    // The covariance is diagonal, so range and bearing are sampled independently.
    let (range, bearing) = (Normal::new(20.0, 0.5).unwrap(), Normal::new(0.6, 0.1).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 200_000;
    let samples: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            to_cartesian(&DVector::from_vec(vec![
                range.sample(&mut rng),
                bearing.sample(&mut rng),
            ]))
        })
        .collect();
    let mc_mean = samples.iter().fold(DVector::zeros(2), |acc, s| acc + s) / n as f64;
    let mc_cov = samples.iter().fold(DMatrix::zeros(2, 2), |acc, s| {
        acc + (s - &mc_mean) * (s - &mc_mean).transpose()
    }) / (n - 1) as f64;
    println!(
        "monte carlo  mean {:.4?} cov {:.4?}",
        mc_mean.as_slice(),
        mc_cov.as_slice()
    );
    Ok(())
}
