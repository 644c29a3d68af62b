//! Generate a seeded dataset, summarise it and write it as JSON lines.
//!
//! ```text
//! cargo run --release --example simulate_dataset -- [out.jsonl] [seed]
//! ```

use std::path::PathBuf;

use maneuver_forecast::sim::{generate_dataset, SimConfig, Split, STOP};

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

fn main() -> maneuver_forecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "dataset.jsonl".into()));
    let seed = args
        .next()
        .map_or(0, |s| s.parse().expect("seed must be an integer"));

    let cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let data = generate_dataset(&cfg)?;

    let speeds: Vec<f64> = data
        .samples
        .iter()
        .filter_map(|s| s.walking_speed)
        .collect();
    let sojourns: Vec<f64> = data
        .samples
        .iter()
        .filter_map(|s| s.braking.map(|b| b.duration))
        .collect();
    let (vm, vs) = mean_std(&speeds);
    let (tm, ts) = mean_std(&sojourns);
    println!(
        "{} trajectories of {} steps at {} fps",
        data.samples.len(),
        cfg.steps(),
        cfg.fps
    );
    println!("walking speed  mean {vm:.3} m/s  std {vs:.3} m/s");
    println!(
        "braking time   mean {tm:.3} s    std {ts:.3} s   ({} stopping)",
        sojourns.len()
    );
    for split in [Split::Train, Split::Test] {
        let n = data.split(split).count();
        let stops = data.split(split).filter(|s| s.maneuver == STOP).count();
        println!("{split:?}: {n} windows, {stops} with a stop inside the horizon");
    }

    data.write_jsonl(&out)?;
    println!("written to {}", out.display());
    Ok(())
}
