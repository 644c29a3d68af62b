//! Run the CV/CA interacting multiple model filter along one simulated
//! stopping pedestrian and print how the CA mode probability reacts to the
//! deceleration.
//!
//! ```text
//! cargo run --release --example imm_tracking -- [seed]
//! ```

use maneuver_forecast::filters::{tpm_from_sojourn, ImmState, InitialUncertainty};
use maneuver_forecast::motion::{build_ca, build_cv, NoiseConfig};
use maneuver_forecast::numerics::Rng;
use maneuver_forecast::sim::{add_noise, simulate_stopping, SimConfig};

fn main() -> maneuver_forecast::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(3, |s| s.parse().expect("seed must be an integer"));
    let cfg = SimConfig::default();
    let mut rng = Rng::new(seed);
    let clean = simulate_stopping(0, &mut rng, &cfg);
    let sample = add_noise(&mut rng, clean, &cfg);
    let braking = sample.braking.expect("stopping sample");
    println!(
        "walking at {:.2} m/s, braking from t = {:.3} s for {:.3} s",
        sample.walking_speed.unwrap_or(f64::NAN),
        braking.onset,
        braking.duration
    );

    let dt = cfg.dt();
    let r = cfg.obs_noise.powi(2);
    let noise = NoiseConfig::default();
    let ca = build_ca(dt, noise.sigma_imm_ca, r);
    let models = [build_cv(dt, noise.sigma_imm_cv, r), ca];
    let z = sample.lateral_obs();
    let mut imm = ImmState::from_first_observations(
        &models,
        tpm_from_sojourn(2, dt, cfg.sojourn_mean),
        z[0],
        z[1],
        InitialUncertainty::default(),
        ca.process_noise[(2, 2)],
    );

    println!(
        "{:>4} {:>7} {:>8} {:>8} {:>8} {:>6}",
        "k", "t [s]", "z [m]", "x [m]", "v [m/s]", "P(CA)"
    );
    for (k, zk) in z.iter().enumerate().skip(2) {
        imm.step(*zk)?;
        let est = imm.combine();
        println!(
            "{k:>4} {:>7.3} {:>8.3} {:>8.3} {:>8.3} {:>6.3}",
            k as f64 * dt,
            zk,
            est.mean[0],
            est.mean[1],
            imm.alpha[1]
        );
    }
    Ok(())
}
