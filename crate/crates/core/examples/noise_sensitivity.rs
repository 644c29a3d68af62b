//! How the classical filters respond to the observation noise level and to
//! the initial velocity/acceleration uncertainty.
//!
//! ```text
//! cargo run --release --example noise_sensitivity
//! ```

use maneuver_forecast::harness::{run_benchmark, BenchConfig, Method};
use maneuver_forecast::sim::{generate_dataset, SimConfig};

fn main() -> maneuver_forecast::Result<()> {
    let methods = vec![Method::Imm, Method::KfCa, Method::KfCv, Method::Linear];
    let cases = [
        ("obs std 0.01 m, P0 std 1", 0.01, 1.0),
        ("obs std 0.01 m, P0 std 0.3", 0.01, 0.3),
        ("obs std 0.01 m, P0 std 3", 0.01, 3.0),
        ("obs std 0.1 m,  P0 std 1", 0.1, 1.0),
    ];
    print!("{:<28}", "setting");
    for m in &methods {
        print!("{:>8} h16", m.name());
    }
    println!();
    for (label, obs, p0) in cases {
        let data = generate_dataset(&SimConfig {
            seed: 7,
            obs_noise: obs,
            ..SimConfig::default()
        })?;
        let bench = BenchConfig {
            methods: methods.clone(),
            init_velocity_std: p0,
            init_accel_std: p0,
            ..BenchConfig::default()
        };
        let table = run_benchmark(&data, None, &bench)?;
        print!("{label:<28}");
        for m in &methods {
            print!(
                "{:>12.4}",
                table.get(*m, 16).expect("benchmarked").fde_mean_m
            );
        }
        println!();
    }
    Ok(())
}
