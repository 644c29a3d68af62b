//! Recurrent surrogate of the IMM filter.
//!
//! The encoder reads the observed window and emits a filtered position
//! together with maneuver probabilities. The decoder is conditioned on one
//! maneuver class and emits a bivariate Gaussian mixture per future step,
//! anchored at the filtered position. Predictions over all classes are
//! combined with the maneuver probabilities:
//! `p(y | Z) = sum_i alpha_i * p(y | m_i, Z)`.
//!
//! Inside the network, positions are expressed relative to the last
//! observation and offsets are scaled to velocities, so predictions are
//! exactly translation-equivariant.

mod model;
mod train;

pub use model::{RnnImmModel, TrainingExample, MODEL_FORMAT};
pub use train::{train, train_examples, EpochStats, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Forecast;
use crate::numerics::{GaussianMixture, Vector};

/// Which label the maneuver head is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaTarget {
    /// Maneuver performed over the prediction horizon.
    Horizon,
    /// Dynamic label at the last observed step.
    Current,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub maneuvers: usize,
    /// Mixture components per maneuver and step.
    pub components: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub embedding: usize,
    pub t_obs: usize,
    pub horizon: usize,
    pub fps: f64,
    /// Feed the encoder state to the decoder at every step as well as at initialisation.
    pub context_every_step: bool,
    /// During training, the decoder and the mixture anchor see the encoder's
    /// maneuver probabilities and filtered position as constants, so those
    /// heads are fitted by the cross-entropy and filtering terms alone.
    pub detach_context: bool,
    pub alpha_target: AlphaTarget,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            maneuvers: 2,
            components: 1,
            encoder_hidden: 64,
            decoder_hidden: 64,
            embedding: 32,
            t_obs: 8,
            horizon: 16,
            fps: 16.0,
            context_every_step: true,
            detach_context: true,
            alpha_target: AlphaTarget::Horizon,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.components,
            self.encoder_hidden,
            self.decoder_hidden,
            self.embedding,
            self.horizon,
        ];
        if self.maneuvers < 2 || sizes.contains(&0) || self.t_obs < 2 || !(self.fps > 0.0) {
            return Err(Error::Config(format!(
                "invalid model configuration: {self:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn decoder_input_dim(&self) -> usize {
        let base = 2 * self.maneuvers + 2;
        if self.context_every_step {
            self.encoder_hidden + base
        } else {
            base
        }
    }
}

/// Maneuver probabilities with per-maneuver, per-step mixtures over position.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastDistribution {
    pub alpha: Vec<f64>,
    /// Filtered position at the last observed step.
    pub anchor: [f64; 2],
    /// `per_class[m][k]` is the mixture for maneuver `m` at step `k + 1`.
    pub per_class: Vec<Vec<GaussianMixture>>,
}

impl ForecastDistribution {
    pub fn horizon(&self) -> usize {
        self.per_class[0].len()
    }

    /// Mixture over all maneuvers at 1-based `step`, weights `alpha_i * w_l`.
    pub fn flattened(&self, step: usize) -> GaussianMixture {
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        for (a, steps) in self.alpha.iter().zip(&self.per_class) {
            for (w, c) in steps[step - 1].iter() {
                weights.push(a * w);
                comps.push(*c);
            }
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        GaussianMixture::new(weights, comps).expect("product of simplex weights")
    }

    pub fn mean(&self, step: usize) -> [f64; 2] {
        let m = self.flattened(step).mean();
        [m[0], m[1]]
    }

    /// Flattened prediction as a per-step forecast.
    pub fn to_forecast(&self) -> Forecast {
        Forecast {
            per_step: (1..=self.horizon()).map(|k| self.flattened(k)).collect(),
        }
    }
}

/// Rectangular evaluation grid; densities are taken at cell centres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) || self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(format!(
                "grid bounds must be ordered with at least 2 cells per axis: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.x_max - self.x_min) / self.nx as f64,
            (self.y_max - self.y_min) / self.ny as f64,
        )
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let (dx, dy) = self.cell_size();
        [
            self.x_min + (ix as f64 + 0.5) * dx,
            self.y_min + (iy as f64 + 0.5) * dy,
        ]
    }

    pub fn shifted(&self, d: [f64; 2]) -> GridSpec {
        GridSpec {
            x_min: self.x_min + d[0],
            x_max: self.x_max + d[0],
            y_min: self.y_min + d[1],
            y_max: self.y_max + d[1],
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub step: usize,
    pub spec: GridSpec,
    /// Row-major, `ny` rows of `nx` values; row `iy` is `y` cell `iy`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.spec.nx + ix]
    }

    /// Sum of densities times cell area.
    pub fn mass(&self) -> f64 {
        let (dx, dy) = self.spec.cell_size();
        self.values.iter().sum::<f64>() * dx * dy
    }

    /// Centre of the highest-density cell (first one on ties).
    pub fn argmax(&self) -> [f64; 2] {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        self.spec.center(best % self.spec.nx, best / self.spec.nx)
    }
}

/// Flattened predictive density on `spec` for each 1-based step in `steps`.
pub fn density_grid(
    f: &ForecastDistribution,
    spec: &GridSpec,
    steps: &[usize],
) -> Result<Vec<DensityGrid>> {
    spec.validate()?;
    steps
        .iter()
        .map(|&step| {
            if step == 0 || step > f.horizon() {
                return Err(Error::Config(format!(
                    "step {step} outside the forecast horizon 1..={}",
                    f.horizon()
                )));
            }
            let mix = f.flattened(step);
            let mut values = Vec::with_capacity(spec.nx * spec.ny);
            for iy in 0..spec.ny {
                for ix in 0..spec.nx {
                    values.push(mix.pdf(&Vector::from_slice(&spec.center(ix, iy))));
                }
            }
            Ok(DensityGrid {
                step,
                spec: *spec,
                values,
            })
        })
        .collect()
}
