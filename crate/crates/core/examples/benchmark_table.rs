//! Lateral final displacement error of the classical predictors on a fresh
//! dataset, optionally including a trained model.
//!
//! ```text
//! cargo run --release --example benchmark_table -- [model.json] [results.csv]
//! ```

use std::path::PathBuf;

use maneuver_forecast::harness::{run_benchmark, BenchConfig, Method};
use maneuver_forecast::rnn_imm::RnnImmModel;
use maneuver_forecast::sim::{generate_dataset, SimConfig};

fn main() -> maneuver_forecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = args
        .next()
        .map(|p| RnnImmModel::load(&PathBuf::from(p)))
        .transpose()?;
    let csv = args.next().map(PathBuf::from);

    let data = generate_dataset(&SimConfig {
        seed: 7,
        ..SimConfig::default()
    })?;
    let mut bench = BenchConfig::default();
    if model.is_none() {
        bench.methods.retain(|m| *m != Method::RnnImm);
    }
    let table = run_benchmark(&data, model.as_ref(), &bench)?;
    print!("{}", table.to_text());

    for h in table.horizons() {
        let ranked: Vec<String> = {
            let mut rows: Vec<_> = table.rows.iter().filter(|r| r.horizon_steps == h).collect();
            rows.sort_by(|a, b| a.fde_mean_m.total_cmp(&b.fde_mean_m));
            rows.iter().map(|r| r.method.to_string()).collect()
        };
        println!("h={h:<2} best to worst: {}", ranked.join(" < "));
    }
    if let Some(path) = csv {
        table.write_csv(&path)?;
    }
    Ok(())
}
