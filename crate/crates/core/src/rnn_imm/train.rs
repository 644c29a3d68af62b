use serde::{Deserialize, Serialize};

use super::{RnnImmModel, TrainingExample};
use crate::error::{Error, Result};
use crate::neural::{clip_global_norm, Adam, LrSchedule};
use crate::numerics::Rng;
use crate::sim::{window, Dataset, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Fraction of the total epoch count between learning-rate decays.
    pub delay_factor: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 64,
            learning_rate: 0.01,
            lr_decay: 0.95,
            delay_factor: 0.1,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.learning_rate,
            decay: self.lr_decay,
            delay_factor: self.delay_factor,
            total_epochs: self.epochs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-window loss over the training split.
    pub train_loss: f64,
    /// Mean per-window loss over the test split, if it is non-empty.
    pub held_out_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
}

fn examples(model: &RnnImmModel, dataset: &Dataset, split: Split) -> Vec<TrainingExample> {
    let c = model.config();
    dataset
        .split(split)
        .map(|s| TrainingExample::new(&window(s, c.t_obs, c.horizon), c))
        .collect()
}

/// Mini-batch Adam over the training split, reporting held-out loss on the
/// test split after each epoch.
pub fn train(
    model: &mut RnnImmModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    let train_set = examples(model, dataset, Split::Train);
    let held_out = examples(model, dataset, Split::Test);
    train_examples(model, &train_set, &held_out, cfg, on_epoch)
}

pub fn train_examples(
    model: &mut RnnImmModel,
    train_set: &[TrainingExample],
    held_out: &[TrainingExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "epochs and batch_size must be positive".into(),
        ));
    }
    let schedule = cfg.schedule();
    let mut adam = Adam::new(model.params(), schedule);
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = model.params().zero_grads();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut counted, mut applied) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut finite = 0usize;
            for &i in batch {
                let loss = model.accumulate(&train_set[i], &mut grads);
                if loss.is_finite() {
                    total += loss;
                    finite += 1;
                } else {
                    log::warn!("epoch {epoch}: non-finite loss on training window {i}, skipped");
                }
            }
            if finite == 0 {
                continue;
            }
            counted += finite;
            grads.scale(1.0 / finite as f64);
            clip_global_norm(&mut grads, cfg.clip_norm);
            if adam.step(model.params_mut(), &grads, epoch) {
                applied += 1;
            }
        }
        if applied == 0 {
            return Err(Error::Diverged { epoch });
        }
        let held_out_loss = (!held_out.is_empty()).then(|| {
            held_out.iter().map(|ex| model.evaluate(ex)).sum::<f64>() / held_out.len() as f64
        });
        let stats = EpochStats {
            epoch,
            learning_rate: schedule.learning_rate(epoch),
            train_loss: total / counted as f64,
            held_out_loss,
        };
        on_epoch(&stats);
        report.history.push(stats);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn_imm::ModelConfig;
    use crate::sim::{generate_dataset, SimConfig};

    fn small() -> (RnnImmModel, Dataset) {
        let config = ModelConfig {
            encoder_hidden: 8,
            decoder_hidden: 8,
            embedding: 6,
            ..ModelConfig::default()
        };
        let data = generate_dataset(&SimConfig {
            n_trajectories: 60,
            seed: 2,
            ..SimConfig::default()
        })
        .unwrap();
        (RnnImmModel::new(config, 4).unwrap(), data)
    }

    #[test]
    fn loss_decreases() {
        let (mut model, data) = small();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            seed: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &cfg, |_| {}).unwrap();
        let h = &report.history;
        assert_eq!(h.len(), 50);
        assert!(
            h[49].train_loss < h[0].train_loss,
            "{} vs {}",
            h[49].train_loss,
            h[0].train_loss
        );
        assert!(h.iter().all(|s| s.held_out_loss.is_some()));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        };
        let (mut a, data) = small();
        let (mut b, _) = small();
        let ra = train(&mut a, &data, &cfg, |_| {}).unwrap();
        let rb = train(&mut b, &data, &cfg, |_| {}).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let (mut model, _) = small();
        assert!(matches!(
            train_examples(&mut model, &[], &[], &TrainConfig::default(), |_| {}),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nan_weights_diverge() {
        let (mut model, data) = small();
        model.params_mut().fill(f64::NAN);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut model, &data, &cfg, |_| {}),
            Err(Error::Diverged { epoch: 0 })
        ));
    }
}
