//! Train the recurrent forecaster on a simulated dataset and compare it with
//! the classical filters.
//!
//! ```text
//! cargo run --release --example train_rnn_imm -- [epochs] [seed] [model-out]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use maneuver_forecast::harness::{run_benchmark, BenchConfig};
use maneuver_forecast::rnn_imm::{train, ModelConfig, RnnImmModel, TrainConfig};
use maneuver_forecast::sim::{generate_dataset, SimConfig};

fn main() -> maneuver_forecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args
        .next()
        .map_or(300, |a| a.parse().expect("epochs must be an integer"));
    let seed: u64 = args
        .next()
        .map_or(7, |a| a.parse().expect("seed must be an integer"));
    let out = args.next().map(PathBuf::from);

    let data = generate_dataset(&SimConfig {
        seed,
        ..SimConfig::default()
    })?;
    let mut model = RnnImmModel::new(ModelConfig::default(), seed)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let report = train(&mut model, &data, &cfg, |s| {
        if s.epoch % 10 == 0 || s.epoch + 1 == epochs {
            println!(
                "epoch {:>4}  lr {:.5}  train {:>9.4}  held-out {:>9.4}  ({:.0?})",
                s.epoch,
                s.learning_rate,
                s.train_loss,
                s.held_out_loss.unwrap_or(f64::NAN),
                start.elapsed()
            );
        }
    })?;
    println!(
        "trained {} epochs in {:.1?}",
        report.history.len(),
        start.elapsed()
    );

    if let Some(path) = out {
        model.save(&path)?;
        println!("model written to {}", path.display());
    }
    let table = run_benchmark(&data, Some(&model), &BenchConfig::default())?;
    print!("{}", table.to_text());
    Ok(())
}
