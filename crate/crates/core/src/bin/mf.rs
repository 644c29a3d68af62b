use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use maneuver_forecast::harness::{
    export_heatmap, run_benchmark, ExperimentConfig, HeatmapConfig, Method,
};
use maneuver_forecast::rnn_imm::{train, RnnImmModel};
use maneuver_forecast::sim::{generate_dataset, window, Dataset};
use maneuver_forecast::{Error, Result};

/// Pedestrian maneuver forecasting: simulation, training and benchmarking.
#[derive(Parser, Debug)]
#[command(name = "mf", version)]
struct Cli {
    /// Seed for simulation, initialisation and batch order (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (JSON with optional `sim`, `model`, `train`, `bench` sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (`simgen` also accepts a `.jsonl` file path).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset. Written to `--out` if it names a `.jsonl` file,
    /// otherwise to `dataset.jsonl` inside it.
    Simgen {
        #[arg(long, visible_alias = "n")]
        trajectories: Option<usize>,
        /// Observation noise std in metres.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train the recurrent forecaster and write `model.json` and `train_log.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Benchmark all methods on the test split; prints the table and writes `results.csv`.
    Bench {
        #[arg(long)]
        data: PathBuf,
        /// Trained model, required when rnn-imm is among the methods.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated subset of rnn-imm, imm, kf-ca, kf-cv, linear.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Observation noise std assumed by the filters.
        #[arg(long)]
        obs_std: Option<f64>,
    },
    /// Print the predicted mixture for one sample as JSON.
    Predict(WindowArgs),
    /// Write predicted density grids for one sample as CSV.
    Heatmap(WindowArgs),
}

#[derive(Args, Debug)]
struct WindowArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample id within the dataset.
    #[arg(long, default_value_t = 0)]
    sample: usize,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn window_for(args: &WindowArgs) -> Result<(RnnImmModel, maneuver_forecast::sim::WindowRecord)> {
    let model = RnnImmModel::load(&args.model)?;
    let data = Dataset::read_jsonl(&args.data)?;
    let sample = data
        .samples
        .iter()
        .find(|s| s.id == args.sample)
        .ok_or_else(|| {
            Error::Config(format!(
                "no sample with id {} in {}",
                args.sample,
                args.data.display()
            ))
        })?;
    let c = model.config();
    if sample.len() < c.t_obs + c.horizon {
        return Err(Error::Config(format!(
            "sample {} is shorter than t_obs + horizon",
            args.sample
        )));
    }
    let record = window(sample, c.t_obs, c.horizon);
    Ok((model, record))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simgen {
            trajectories,
            noise,
        } => {
            let mut sim = cfg.sim.clone();
            if let Some(n) = trajectories {
                sim.n_trajectories = *n;
            }
            if let Some(n) = noise {
                sim.obs_noise = *n;
            }
            let data = generate_dataset(&sim)?;
            let path = if cli.out.extension().is_some_and(|e| e == "jsonl") {
                cli.out.clone()
            } else {
                cli.out.join("dataset.jsonl")
            };
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_out(dir)?;
            }
            data.write_jsonl(&path)?;
            log::info!(
                "{} trajectories written to {}",
                data.samples.len(),
                path.display()
            );
        }
        Command::Train { data, epochs } => {
            let dataset = Dataset::read_jsonl(data)?;
            let mut tc = cfg.train.clone();
            if let Some(e) = epochs {
                tc.epochs = *e;
            }
            let mut model = RnnImmModel::new(cfg.model.clone(), tc.seed)?;
            let report = train(&mut model, &dataset, &tc, |s| {
                log::info!(
                    "epoch {:>4}  lr {:.5}  train {:.4}  held-out {:.4}",
                    s.epoch,
                    s.learning_rate,
                    s.train_loss,
                    s.held_out_loss.unwrap_or(f64::NAN)
                );
            })?;
            create_out(&cli.out)?;
            model.save(&cli.out.join("model.json"))?;
            let mut log_text = String::from("epoch,learning_rate,train_loss,held_out_loss\n");
            for s in &report.history {
                let held = s.held_out_loss.map(|v| v.to_string()).unwrap_or_default();
                log_text += &format!("{},{},{},{held}\n", s.epoch, s.learning_rate, s.train_loss);
            }
            write_file(&cli.out.join("train_log.csv"), &log_text)?;
            log::info!("model written to {}", cli.out.join("model.json").display());
        }
        Command::Bench {
            data,
            model,
            methods,
            obs_std,
        } => {
            let dataset = Dataset::read_jsonl(data)?;
            let mut bench = cfg.bench.clone();
            if let Some(m) = methods {
                bench.methods = m.clone();
            }
            if obs_std.is_some() {
                bench.obs_std = *obs_std;
            }
            let model = model.as_deref().map(RnnImmModel::load).transpose()?;
            let table = run_benchmark(&dataset, model.as_ref(), &bench)?;
            print!("{}", table.to_text());
            create_out(&cli.out)?;
            table.write_csv(&cli.out.join("results.csv"))?;
        }
        Command::Predict(args) => {
            let (model, record) = window_for(args)?;
            let f = model.predict(&record.features);
            let steps: Vec<_> = (1..=f.horizon())
                .map(|k| {
                    let per_maneuver: Vec<_> = f
                        .per_class
                        .iter()
                        .map(|steps| {
                            steps[k - 1]
                                .iter()
                                .map(|(w, g)| {
                                    json!({
                                        "weight": w,
                                        "mean": [g.mean[0], g.mean[1]],
                                        "cov": [[g.cov[(0, 0)], g.cov[(0, 1)]], [g.cov[(1, 0)], g.cov[(1, 1)]]],
                                    })
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    json!({ "step": k, "mean": f.mean(k), "maneuvers": per_maneuver })
                })
                .collect();
            let out = json!({
                "sample": args.sample,
                "alpha": f.alpha,
                "anchor": f.anchor,
                "steps": steps,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Heatmap(args) => {
            let (model, record) = window_for(args)?;
            let paths = export_heatmap(&model, &record, &HeatmapConfig::default(), &cli.out)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
