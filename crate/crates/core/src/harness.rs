//! Benchmark of all predictors on the lateral final displacement error,
//! density export for single windows, and the experiment configuration file.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    filter_track, imm_filter_track, linear_baseline, tpm_from_sojourn, Forecast, InitialUncertainty,
};
use crate::motion::{build_ca, build_cv, NoiseConfig, StateSpaceModel};
use crate::numerics::Matrix;
use crate::rnn_imm::{density_grid, GridSpec, ModelConfig, RnnImmModel, TrainConfig};
use crate::sim::{window, Dataset, SimConfig, Split, WindowRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rnn-imm")]
    RnnImm,
    #[serde(rename = "imm")]
    Imm,
    #[serde(rename = "kf-ca")]
    KfCa,
    #[serde(rename = "kf-cv")]
    KfCv,
    #[serde(rename = "linear")]
    Linear,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::RnnImm,
        Method::Imm,
        Method::KfCa,
        Method::KfCv,
        Method::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RnnImm => "rnn-imm",
            Method::Imm => "imm",
            Method::KfCa => "kf-ca",
            Method::KfCv => "kf-cv",
            Method::Linear => "linear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected one of rnn-imm, imm, kf-ca, kf-cv, linear)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub horizons: Vec<usize>,
    pub t_obs: usize,
    pub methods: Vec<Method>,
    pub noise: NoiseConfig,
    /// Filter observation noise std; the dataset's simulated value when absent.
    pub obs_std: Option<f64>,
    /// Mean sojourn time for the IMM transition matrix; the dataset's when absent.
    pub sojourn: Option<f64>,
    pub init_velocity_std: f64,
    pub init_accel_std: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            horizons: vec![8, 12, 16],
            t_obs: 8,
            methods: Method::ALL.to_vec(),
            noise: NoiseConfig::default(),
            obs_std: None,
            sojourn: None,
            init_velocity_std: 1.0,
            init_accel_std: 1.0,
        }
    }
}

impl BenchConfig {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self, sim: &SimConfig) -> Result<()> {
        self.noise.validate()?;
        if self.t_obs < 2
            || self.horizons.is_empty()
            || self.horizons.contains(&0)
            || self.methods.is_empty()
        {
            return Err(Error::Config(
                "need t_obs >= 2, at least one positive horizon and one method".into(),
            ));
        }
        if self.t_obs + self.max_horizon() > sim.steps() {
            return Err(Error::Config(format!(
                "t_obs {} + horizon {} exceeds the simulated length {}",
                self.t_obs,
                self.max_horizon(),
                sim.steps()
            )));
        }
        Ok(())
    }
}

/// The classical reference predictors, configured for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalPredictors {
    pub imm_models: [StateSpaceModel; 2],
    pub tpm: Matrix,
    pub embed_accel_var: f64,
    pub kf_cv: StateSpaceModel,
    pub kf_ca: StateSpaceModel,
    pub init: InitialUncertainty,
}

impl ClassicalPredictors {
    pub fn new(bench: &BenchConfig, sim: &SimConfig) -> Self {
        let dt = sim.dt();
        let r = bench.obs_std.unwrap_or(sim.obs_noise).powi(2);
        let n = &bench.noise;
        let imm_ca = build_ca(dt, n.sigma_imm_ca, r);
        Self {
            imm_models: [build_cv(dt, n.sigma_imm_cv, r), imm_ca],
            tpm: tpm_from_sojourn(2, dt, bench.sojourn.unwrap_or(sim.sojourn_mean)),
            embed_accel_var: imm_ca.process_noise[(2, 2)],
            kf_cv: build_cv(dt, n.sigma_kf_cv, r),
            kf_ca: build_ca(dt, n.sigma_kf_ca, r),
            init: InitialUncertainty {
                velocity_std: bench.init_velocity_std,
                accel_std: bench.init_accel_std,
            },
        }
    }

    /// Lateral forecast from lateral observations.
    pub fn forecast(&self, method: Method, lateral: &[f64], steps: usize) -> Result<Forecast> {
        match method {
            Method::Imm => Ok(imm_filter_track(
                &self.imm_models,
                self.tpm,
                lateral,
                self.init,
                self.embed_accel_var,
            )?
            .forecast(steps)),
            Method::KfCa => Ok(filter_track(self.kf_ca, lateral, self.init)?.forecast(steps)),
            Method::KfCv => Ok(filter_track(self.kf_cv, lateral, self.init)?.forecast(steps)),
            Method::Linear => Ok(linear_baseline(lateral, steps)),
            Method::RnnImm => Err(Error::Config("rnn-imm is not a classical predictor".into())),
        }
    }
}

/// Lateral final displacement error.
pub fn fde(predicted: [f64; 2], truth: [f64; 2]) -> f64 {
    (predicted[0] - truth[0]).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub horizon_steps: usize,
    pub fde_mean_m: f64,
    /// Population standard deviation of the per-window errors.
    pub fde_std_m: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn get(&self, method: Method, horizon: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.horizon_steps == horizon)
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.rows.iter().map(|r| r.horizon_steps).collect();
        h.sort_unstable();
        h.dedup();
        h
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !m.contains(&r.method) {
                m.push(r.method);
            }
        }
        m
    }

    pub fn to_text(&self) -> String {
        let horizons = self.horizons();
        let mut out = format!("{:<10}", "method");
        for h in &horizons {
            out += &format!(" {:>21}", format!("h={h} FDE / std [m]"));
        }
        out.push('\n');
        for m in self.methods() {
            out += &format!("{:<10}", m.name());
            for h in &horizons {
                match self.get(m, *h) {
                    Some(r) => {
                        out += &format!(
                            " {:>21}",
                            format!("{:.4} / {:.4}", r.fde_mean_m, r.fde_std_m)
                        )
                    }
                    None => out += &format!(" {:>21}", "-"),
                }
            }
            out.push('\n');
        }
        if let Some(r) = self.rows.first() {
            out += &format!("n = {} test windows\n", r.n);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-window lateral errors of one method at each configured horizon.
pub fn method_errors(
    method: Method,
    windows: &[WindowRecord],
    model: Option<&RnnImmModel>,
    classical: &ClassicalPredictors,
    horizons: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let steps = horizons.iter().copied().max().unwrap_or(0);
    let mut errors = vec![Vec::with_capacity(windows.len()); horizons.len()];
    for w in windows {
        let predicted: Vec<f64> = match method {
            Method::RnnImm => {
                let model = model.ok_or_else(|| {
                    Error::Config("method rnn-imm needs a trained model (pass --model <file> or drop it from --methods)".into())
                })?;
                if model.config().horizon < steps || model.config().t_obs != w.features.len() + 1 {
                    return Err(Error::Config(format!(
                        "model expects t_obs {} and predicts {} steps; benchmark needs t_obs {} and {steps} steps",
                        model.config().t_obs,
                        model.config().horizon,
                        w.features.len() + 1
                    )));
                }
                let f = model.predict(&w.features);
                horizons.iter().map(|h| f.mean(*h)[0]).collect()
            }
            _ => {
                let f = classical.forecast(method, &w.lateral_obs, steps)?;
                horizons.iter().map(|h| f.mean_position(*h)).collect()
            }
        };
        for (k, h) in horizons.iter().enumerate() {
            errors[k].push(fde([predicted[k], 0.0], w.future[h - 1]));
        }
    }
    Ok(errors)
}

/// Evaluates every configured method on the test split.
pub fn run_benchmark(
    dataset: &Dataset,
    model: Option<&RnnImmModel>,
    cfg: &BenchConfig,
) -> Result<ResultsTable> {
    cfg.validate(&dataset.config)?;
    let windows: Vec<WindowRecord> = dataset
        .split(Split::Test)
        .map(|s| window(s, cfg.t_obs, cfg.max_horizon()))
        .collect();
    if windows.is_empty() {
        return Err(Error::Config("dataset has no test windows".into()));
    }
    let classical = ClassicalPredictors::new(cfg, &dataset.config);
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let errors = method_errors(method, &windows, model, &classical, &cfg.horizons)?;
        for (h, e) in cfg.horizons.iter().zip(&errors) {
            let (mean, std) = mean_std(e);
            rows.push(ResultRow {
                method,
                horizon_steps: *h,
                fde_mean_m: mean,
                fde_std_m: std,
                n: e.len(),
            });
        }
    }
    Ok(ResultsTable { rows })
}

/// Grid (relative to the first observation of the window) and steps to export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub grid: GridSpec,
    pub steps: Vec<usize>,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                x_min: -0.5,
                x_max: 2.5,
                y_min: -0.5,
                y_max: 0.5,
                nx: 151,
                ny: 51,
            },
            steps: vec![8, 12, 16],
        }
    }
}

/// Writes one CSV per requested step into `out_dir`. The first line names the
/// grid fields, the second holds their values, then `ny` rows of `nx`
/// densities (row `k` is the `k`-th cell along y, from `y_min` upwards).
/// Coordinates are relative to the first observation of the window.
pub fn export_heatmap(
    model: &RnnImmModel,
    record: &WindowRecord,
    cfg: &HeatmapConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let f = model.predict(&record.features);
    let origin = record.first_obs;
    let grids = density_grid(&f, &cfg.grid.shifted(origin), &cfg.steps)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(grids.len());
    for g in &grids {
        let path = out_dir.join(format!("density_step{:02}.csv", g.step));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let s = cfg.grid;
        let mut text = String::from("step,x_min,x_max,y_min,y_max,nx,ny\n");
        text += &format!(
            "{},{},{},{},{},{},{}\n",
            g.step, s.x_min, s.x_max, s.y_min, s.y_max, s.nx, s.ny
        );
        for row in g.values.chunks(s.nx) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            text += &cells.join(",");
            text.push('\n');
        }
        w.write_all(text.as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// One self-describing experiment: simulation, model, training and benchmark.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
