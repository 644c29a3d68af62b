//! Synthetic crossing and stopping pedestrians.
//!
//! Every trajectory walks along the lateral (x) axis from a random start at
//! a preferred speed. Stopping trajectories brake with constant deceleration
//! `v / T_s` until standstill, with the braking onset placed relative to the
//! last observed step so that windows contain both ongoing and imminent stops.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DATASET_FORMAT: &str = "mf-dataset/1";

pub const WALK: usize = 0;
pub const STOP: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub fps: f64,
    /// Preferred walking speed, m/s.
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Speeds at or below this are redrawn.
    pub min_speed: f64,
    /// Braking duration `T_s`, seconds.
    pub sojourn_mean: f64,
    pub sojourn_std: f64,
    /// Braking durations at or below this are redrawn.
    pub min_sojourn: f64,
    /// Observation noise standard deviation per axis, meters.
    pub obs_noise: f64,
    /// Standard deviation of the start position per axis, meters.
    pub start_std: f64,
    pub n_trajectories: usize,
    pub train_fraction: f64,
    pub stop_fraction: f64,
    pub t_obs: usize,
    pub horizon: usize,
    /// Earliest braking onset, in steps relative to the last observed step.
    pub onset_min: f64,
    /// Latest braking onset, in steps relative to the last observed step.
    pub onset_max: f64,
    /// A step is labelled as stopping when the acceleration is below this (m/s^2) ...
    pub label_accel: f64,
    /// ... or the speed below this (m/s).
    pub label_speed: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fps: 16.0,
            speed_mean: 1.38,
            speed_std: 0.37,
            min_speed: 0.2,
            sojourn_mean: 1.0,
            sojourn_std: 0.1,
            min_sojourn: 0.5,
            obs_noise: 0.01,
            start_std: 1.0,
            n_trajectories: 1000,
            train_fraction: 0.8,
            stop_fraction: 0.5,
            t_obs: 8,
            horizon: 16,
            onset_min: -4.0,
            onset_max: 8.0,
            label_accel: -0.1,
            label_speed: 0.05,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn steps(&self) -> usize {
        self.t_obs + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.fps,
            self.speed_mean,
            self.speed_std,
            self.sojourn_mean,
            self.sojourn_std,
            self.start_std,
        ];
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("fps, speed and sojourn parameters and start_std must be positive");
        }
        if !(self.obs_noise >= 0.0) {
            return bad("obs_noise must be non-negative");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.stop_fraction) {
            return bad("stop_fraction must lie in [0, 1]");
        }
        if self.n_trajectories == 0 || self.t_obs < 2 || self.horizon == 0 {
            return bad("need at least one trajectory, t_obs >= 2 and horizon >= 1");
        }
        if self.onset_min > self.onset_max {
            return bad("onset_min must not exceed onset_max");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ground-truth braking profile of a stopping trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Braking {
    /// Onset time, seconds after the first sample.
    pub onset: f64,
    /// Braking duration `T_s`, seconds.
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub id: usize,
    pub split: Split,
    /// Sample-level maneuver over the prediction horizon.
    pub maneuver: usize,
    pub fps: f64,
    pub gt: Vec<[f64; 2]>,
    pub obs: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    #[serde(skip)]
    pub speeds: Vec<f64>,
    #[serde(skip)]
    pub walking_speed: Option<f64>,
    #[serde(skip)]
    pub braking: Option<Braking>,
}

impl TrajectorySample {
    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    /// Lateral coordinate of the observations.
    pub fn lateral_obs(&self) -> Vec<f64> {
        self.obs.iter().map(|p| p[0]).collect()
    }
}

struct Kinematics {
    speed: f64,
    braking: Option<Braking>,
}

impl Kinematics {
    /// (distance travelled, speed, acceleration) at time `t`.
    fn at(&self, t: f64) -> (f64, f64, f64) {
        let v = self.speed;
        match self.braking {
            None => (v * t, v, 0.0),
            Some(Braking { onset, duration }) => {
                if t < onset {
                    (v * t, v, 0.0)
                } else if t < onset + duration {
                    let tau = t - onset;
                    let decel = v / duration;
                    (
                        v * onset + v * tau - 0.5 * decel * tau * tau,
                        v - decel * tau,
                        -decel,
                    )
                } else {
                    (v * onset + 0.5 * v * duration, 0.0, 0.0)
                }
            }
        }
    }
}

fn draw_truncated(rng: &mut Rng, mean: f64, std: f64, floor: f64) -> f64 {
    loop {
        let x = rng.normal(mean, std);
        if x > floor {
            return x;
        }
    }
}

fn render(id: usize, rng: &mut Rng, cfg: &SimConfig, kin: Kinematics) -> TrajectorySample {
    let dt = cfg.dt();
    let start = [
        rng.normal(0.0, cfg.start_std),
        rng.normal(0.0, cfg.start_std),
    ];
    let mut gt = Vec::with_capacity(cfg.steps());
    let mut speeds = Vec::with_capacity(cfg.steps());
    let mut labels = Vec::with_capacity(cfg.steps());
    for k in 0..cfg.steps() {
        let (dist, speed, accel) = kin.at(k as f64 * dt);
        gt.push([start[0] + dist, start[1]]);
        speeds.push(speed);
        let stopping = accel < cfg.label_accel || speed < cfg.label_speed;
        labels.push(if stopping { STOP } else { WALK });
    }
    let maneuver = if labels[cfg.t_obs..].contains(&STOP) {
        STOP
    } else {
        WALK
    };
    TrajectorySample {
        id,
        split: Split::Train,
        maneuver,
        fps: cfg.fps,
        obs: gt.clone(),
        gt,
        labels,
        speeds,
        walking_speed: Some(kin.speed),
        braking: kin.braking,
    }
}

/// Constant-velocity crossing; noise-free until [`add_noise`].
pub fn simulate_crossing(id: usize, rng: &mut Rng, cfg: &SimConfig) -> TrajectorySample {
    let speed = draw_truncated(rng, cfg.speed_mean, cfg.speed_std, cfg.min_speed);
    render(
        id,
        rng,
        cfg,
        Kinematics {
            speed,
            braking: None,
        },
    )
}

/// Walk, brake at constant deceleration to standstill, stand.
pub fn simulate_stopping(id: usize, rng: &mut Rng, cfg: &SimConfig) -> TrajectorySample {
    let speed = draw_truncated(rng, cfg.speed_mean, cfg.speed_std, cfg.min_speed);
    let duration = draw_truncated(rng, cfg.sojourn_mean, cfg.sojourn_std, cfg.min_sojourn);
    let last_obs = (cfg.t_obs - 1) as f64;
    let onset_step = rng.uniform_range(last_obs + cfg.onset_min, last_obs + cfg.onset_max);
    let onset = onset_step.max(0.0) * cfg.dt();
    render(
        id,
        rng,
        cfg,
        Kinematics {
            speed,
            braking: Some(Braking { onset, duration }),
        },
    )
}

/// Adds iid Gaussian noise of standard deviation `cfg.obs_noise` to each axis.
pub fn add_noise(rng: &mut Rng, mut sample: TrajectorySample, cfg: &SimConfig) -> TrajectorySample {
    sample.obs = sample
        .gt
        .iter()
        .map(|p| {
            [
                p[0] + cfg.obs_noise * rng.standard_normal(),
                p[1] + cfg.obs_noise * rng.standard_normal(),
            ]
        })
        .collect();
    sample
}

/// Network-ready view of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    /// Rows `(x, y, dx, dy)` for observed steps 2..=t_obs.
    pub features: Vec<[f64; 4]>,
    /// Ground-truth future positions, one per horizon step.
    pub future: Vec<[f64; 2]>,
    /// Ground-truth position at the last observed step.
    pub current: [f64; 2],
    pub last_obs: [f64; 2],
    pub first_obs: [f64; 2],
    /// Sample-level maneuver over the horizon.
    pub maneuver: usize,
    /// Dynamic label at the last observed step.
    pub current_label: usize,
    /// Lateral observations for the 1-D filters.
    pub lateral_obs: Vec<f64>,
}

pub fn window(sample: &TrajectorySample, t_obs: usize, horizon: usize) -> WindowRecord {
    assert!(t_obs >= 2, "need at least two observations");
    assert!(
        sample.len() >= t_obs + horizon,
        "sample {} too short for an {t_obs}+{horizon} window",
        sample.id
    );
    let obs = &sample.obs[..t_obs];
    let features = obs
        .windows(2)
        .map(|w| [w[1][0], w[1][1], w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();
    WindowRecord {
        features,
        future: sample.gt[t_obs..t_obs + horizon].to_vec(),
        current: sample.gt[t_obs - 1],
        last_obs: obs[t_obs - 1],
        first_obs: obs[0],
        maneuver: sample.maneuver,
        current_label: sample.labels[t_obs - 1],
        lateral_obs: obs.iter().map(|p| p[0]).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: SimConfig,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: SimConfig,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &TrajectorySample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = Header {
            format: DATASET_FORMAT.to_string(),
            config: self.config.clone(),
        };
        let mut write_line = |line: String| writeln!(out, "{line}").map_err(|e| Error::io(path, e));
        write_line(serde_json::to_string(&header)?)?;
        for s in &self.samples {
            write_line(serde_json::to_string(s)?)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Malformed {
                what: "dataset",
                reason: "empty file".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&header_line)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Format {
                expected: DATASET_FORMAT.into(),
                found: header.format,
            });
        }
        let mut samples = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: TrajectorySample = serde_json::from_str(&line)?;
            if s.obs.len() != s.gt.len() || s.labels.len() != s.gt.len() {
                return Err(Error::Malformed {
                    what: "dataset",
                    reason: format!("sample {} has mismatched gt/obs/labels lengths", s.id),
                });
            }
            samples.push(s);
        }
        Ok(Self {
            config: header.config,
            samples,
        })
    }
}

pub fn generate_dataset(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_trajectories;
    let mut master = Rng::new(cfg.seed);

    let n_stop = (cfg.stop_fraction * n as f64).round() as usize;
    let mut stopping: Vec<bool> = (0..n).map(|i| i < n_stop).collect();
    master.shuffle(&mut stopping);

    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    master.shuffle(&mut order);
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }

    let samples = (0..n)
        .map(|id| {
            let mut rng = Rng::derive(cfg.seed, id as u64);
            let clean = if stopping[id] {
                simulate_stopping(id, &mut rng, cfg)
            } else {
                simulate_crossing(id, &mut rng, cfg)
            };
            let mut sample = add_noise(&mut rng, clean, cfg);
            sample.split = split[id];
            sample
        })
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        samples,
    })
}
