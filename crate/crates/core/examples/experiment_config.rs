//! Overriding module defaults from a `key = value` experiment file.

use vehicle_prediction::harness::config::ExperimentConfig;

fn main() -> vehicle_prediction::Result<()> {
    let text = "\
# a noisier sensor and a longer horizon
measurement.sigma_nx = 0.5
measurement.sigma_ny = 0.5
champ.sigma_lik = 0.7
prediction.horizon = 3
ut.kappa = 0
";
    let cfg = ExperimentConfig::from_text(text)?;
    println!("measurement noise {:?}", cfg.measurement);
    println!("likelihood scale  {}", cfg.champ.likelihood.sigma_lik);
    println!("prediction        {:?}", cfg.pipeline().prediction);
    println!("unscented         {:?}", cfg.ut);

    match ExperimentConfig::from_text("champ.min_len = -3\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
