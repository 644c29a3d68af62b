//! Export predicted position densities for a walking and a stopping window.
//! Trains a small model first unless a saved one is given.
//!
//! ```text
//! cargo run --release --example density_heatmap -- [out-dir] [model.json]
//! ```

use std::path::{Path, PathBuf};

use maneuver_forecast::harness::{export_heatmap, HeatmapConfig};
use maneuver_forecast::rnn_imm::{density_grid, train, ModelConfig, RnnImmModel, TrainConfig};
use maneuver_forecast::sim::{generate_dataset, window, SimConfig, Split, STOP, WALK};

fn main() -> maneuver_forecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "heatmaps".into()));
    let sim = SimConfig {
        seed: 7,
        ..SimConfig::default()
    };
    let data = generate_dataset(&sim)?;

    let model = match args.next() {
        Some(p) => RnnImmModel::load(Path::new(&p))?,
        None => {
            let mut m = RnnImmModel::new(ModelConfig::default(), 7)?;
            let cfg = TrainConfig {
                epochs: 60,
                seed: 7,
                ..TrainConfig::default()
            };
            train(&mut m, &data, &cfg, |s| {
                if s.epoch % 20 == 0 {
                    println!("epoch {:>3} train loss {:.3}", s.epoch, s.train_loss);
                }
            })?;
            m
        }
    };

    let last_obs_time = (sim.t_obs - 1) as f64 * sim.dt();
    let walking = data.split(Split::Test).find(|s| s.maneuver == WALK);
    let stopping = data
        .split(Split::Test)
        .find(|s| s.maneuver == STOP && s.braking.is_some_and(|b| b.onset < last_obs_time));
    let cfg = HeatmapConfig::default();
    for (name, sample) in [("walking", walking), ("stopping", stopping)] {
        let Some(sample) = sample else { continue };
        let record = window(sample, model.config().t_obs, model.config().horizon);
        let paths = export_heatmap(&model, &record, &cfg, &out.join(name))?;
        let f = model.predict(&record.features);
        let grid = density_grid(&f, &cfg.grid.shifted(record.last_obs), &[8])?;
        let peak = grid[0].argmax();
        println!(
            "{name}: P(stop) = {:.2}, step-8 density peak {:.2} m ahead of the last observation, {} files in {}",
            f.alpha[STOP],
            peak[0] - record.last_obs[0],
            paths.len(),
            out.join(name).display()
        );
    }
    Ok(())
}
