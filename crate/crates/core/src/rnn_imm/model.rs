use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AlphaTarget, ForecastDistribution, ModelConfig};
use crate::error::{Error, Result};
use crate::neural::{
    finite_difference_check, mixture_components, Activation, Dense, GradientCheck, Gradients,
    LstmCell, ParamStore, Tape, Tensor, Var, MIXTURE_PARAMS_PER_COMPONENT,
};
use crate::numerics::{GaussianMixture, GaussianNd, Matrix, Rng, Vector};
use crate::sim::WindowRecord;

pub const MODEL_FORMAT: &str = "mf-model/1";

/// Parameter handles of every layer; the weights themselves live in the store.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Layers {
    embed: Dense,
    encoder: LstmCell,
    encoder_head: Dense,
    bridge: Option<Dense>,
    decoder: LstmCell,
    decoder_head: Dense,
}

pub(crate) struct Encoded {
    pub h: Var,
    /// Filtered position relative to the last observation.
    pub residual: Var,
    pub alpha: Var,
}

/// Inputs in the frame of the last observation, offsets as velocities.
fn normalise(features: &[[f64; 4]], fps: f64) -> (Vec<[f64; 4]>, [f64; 2]) {
    let last = features.last().expect("empty feature sequence");
    let origin = [last[0], last[1]];
    let rows = features
        .iter()
        .map(|r| [r[0] - origin[0], r[1] - origin[1], r[2] * fps, r[3] * fps])
        .collect();
    (rows, origin)
}

/// One training example in the last-observation frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    rows: Vec<[f64; 4]>,
    target_alpha: Vec<f64>,
    current: [f64; 2],
    future: Vec<[f64; 2]>,
}

impl TrainingExample {
    pub fn new(record: &WindowRecord, config: &ModelConfig) -> Self {
        let (rows, origin) = normalise(&record.features, config.fps);
        let class = match config.alpha_target {
            AlphaTarget::Horizon => record.maneuver,
            AlphaTarget::Current => record.current_label,
        };
        let mut target_alpha = vec![0.0; config.maneuvers];
        target_alpha[class] = 1.0;
        let rel = |p: &[f64; 2]| [p[0] - origin[0], p[1] - origin[1]];
        Self {
            rows,
            target_alpha,
            current: rel(&record.current),
            future: record.future.iter().take(config.horizon).map(rel).collect(),
        }
    }
}

impl Layers {
    fn new(store: &mut ParamStore, c: &ModelConfig, rng: &mut Rng) -> Self {
        let embed = Dense::new(store, "embed", 4, c.embedding, Activation::Relu, rng);
        let encoder = LstmCell::new(store, "encoder", c.embedding, c.encoder_hidden, rng);
        let encoder_head = Dense::new(
            store,
            "encoder_head",
            c.encoder_hidden,
            2 + c.maneuvers,
            Activation::Linear,
            rng,
        );
        let bridge = (c.encoder_hidden != c.decoder_hidden).then(|| {
            Dense::new(
                store,
                "bridge",
                c.encoder_hidden,
                c.decoder_hidden,
                Activation::Tanh,
                rng,
            )
        });
        let decoder = LstmCell::new(
            store,
            "decoder",
            c.decoder_input_dim(),
            c.decoder_hidden,
            rng,
        );
        let decoder_head = Dense::new(
            store,
            "decoder_head",
            c.decoder_hidden,
            MIXTURE_PARAMS_PER_COMPONENT * c.components,
            Activation::Linear,
            rng,
        );
        Self {
            embed,
            encoder,
            encoder_head,
            bridge,
            decoder,
            decoder_head,
        }
    }

    pub(crate) fn encode(&self, t: &mut Tape, c: &ModelConfig, rows: &[[f64; 4]]) -> Encoded {
        assert_eq!(
            rows.len(),
            c.t_obs - 1,
            "expected {} feature rows, got {}",
            c.t_obs - 1,
            rows.len()
        );
        let mut h = t.input(vec![0.0; c.encoder_hidden]);
        let mut state = h;
        for row in rows {
            let x = t.input(row.to_vec());
            let e = self.embed.forward(t, x);
            (h, state) = self.encoder.step(t, e, h, state);
        }
        let head = self.encoder_head.forward(t, h);
        let residual = t.slice(head, 0, 2);
        let logits = t.slice(head, 2, c.maneuvers);
        let alpha = t.softmax(logits);
        Encoded { h, residual, alpha }
    }

    /// Raw mixture parameters for every future step.
    pub(crate) fn decode(
        &self,
        t: &mut Tape,
        c: &ModelConfig,
        enc: &Encoded,
        one_hot: &[f64],
    ) -> Vec<Var> {
        let one_hot = t.input(one_hot.to_vec());
        let mut h = match &self.bridge {
            Some(b) => b.forward(t, enc.h),
            None => enc.h,
        };
        let mut state = t.input(vec![0.0; c.decoder_hidden]);
        let input = if c.context_every_step {
            t.concat(&[enc.h, one_hot, enc.alpha, enc.residual])
        } else {
            t.concat(&[one_hot, enc.alpha, enc.residual])
        };
        let projected = self.decoder.project_input(t, input);
        (0..c.horizon)
            .map(|_| {
                (h, state) = self.decoder.step_projected(t, projected, h, state);
                self.decoder_head.forward(t, h)
            })
            .collect()
    }

    /// Cross-entropy + filtering MSE + per-step mixture NLL with the decoder
    /// conditioned on the target class.
    pub(crate) fn loss(&self, t: &mut Tape, c: &ModelConfig, ex: &TrainingExample) -> Var {
        let enc = self.encode(t, c, &ex.rows);
        let ce = t.cross_entropy(enc.alpha, &ex.target_alpha);
        let mse = t.mse(enc.residual, &ex.current);
        let mut terms = vec![ce, mse];
        let context = if c.detach_context {
            Encoded {
                h: enc.h,
                residual: t.detach(enc.residual),
                alpha: t.detach(enc.alpha),
            }
        } else {
            enc
        };
        for (raw, target) in self
            .decode(t, c, &context, &ex.target_alpha)
            .into_iter()
            .zip(&ex.future)
        {
            terms.push(t.mixture_nll(raw, context.residual, *target));
        }
        t.sum(&terms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnImmModel {
    config: ModelConfig,
    layers: Layers,
    store: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct ParamBlock {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: ModelConfig,
    params: Vec<ParamBlock>,
}

impl RnnImmModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let layers = Layers::new(&mut store, &config, &mut Rng::new(seed));
        Ok(Self {
            config,
            layers,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    #[cfg(test)]
    pub(crate) fn layers(&self) -> Layers {
        self.layers
    }

    /// Encoder outputs: filtered position `x_hat` and maneuver probabilities.
    pub fn encode(&self, features: &[[f64; 4]]) -> ([f64; 2], Vec<f64>) {
        let (rows, origin) = normalise(features, self.config.fps);
        let mut t = Tape::new(&self.store);
        let enc = self.layers.encode(&mut t, &self.config, &rows);
        let r = t.value(enc.residual);
        (
            [origin[0] + r[0], origin[1] + r[1]],
            t.value(enc.alpha).to_vec(),
        )
    }

    /// Total loss and its gradient for one window.
    pub fn loss_total(&self, record: &WindowRecord) -> (f64, Gradients) {
        let ex = TrainingExample::new(record, &self.config);
        let mut grads = self.store.zero_grads();
        let loss = self.accumulate(&ex, &mut grads);
        (loss, grads)
    }

    /// Central-difference check of [`loss_total`](Self::loss_total)'s
    /// gradient over every weight. With `detach_context` set the analytic
    /// gradient treats the decoder context as constant, so the check is
    /// only meaningful with it cleared.
    pub fn gradient_check(&mut self, record: &WindowRecord, step: f64) -> GradientCheck {
        let ex = TrainingExample::new(record, &self.config);
        let (_, grads) = self.loss_total(record);
        let (layers, config) = (&self.layers, &self.config);
        finite_difference_check(&mut self.store, &grads, step, |s| {
            let mut t = Tape::new(s);
            let loss = layers.loss(&mut t, config, &ex);
            t.scalar(loss)
        })
    }

    pub(crate) fn accumulate(&self, ex: &TrainingExample, grads: &mut Gradients) -> f64 {
        let mut t = Tape::new(&self.store);
        let loss = self.layers.loss(&mut t, &self.config, ex);
        let value = t.scalar(loss);
        if value.is_finite() {
            t.backward(loss, grads);
        }
        value
    }

    pub(crate) fn evaluate(&self, ex: &TrainingExample) -> f64 {
        let mut t = Tape::new(&self.store);
        let loss = self.layers.loss(&mut t, &self.config, ex);
        t.scalar(loss)
    }

    /// Maneuver probabilities and, for every maneuver, per-step mixtures.
    pub fn predict(&self, features: &[[f64; 4]]) -> ForecastDistribution {
        let c = &self.config;
        let (rows, origin) = normalise(features, c.fps);
        let mut t = Tape::new(&self.store);
        let enc = self.layers.encode(&mut t, c, &rows);
        let r = t.value(enc.residual);
        let anchor = [origin[0] + r[0], origin[1] + r[1]];
        let alpha = t.value(enc.alpha).to_vec();
        let per_class = (0..c.maneuvers)
            .map(|m| {
                let mut one_hot = vec![0.0; c.maneuvers];
                one_hot[m] = 1.0;
                self.layers
                    .decode(&mut t, c, &enc, &one_hot)
                    .into_iter()
                    .map(|raw| mixture_at(t.value(raw), anchor))
                    .collect()
            })
            .collect();
        ForecastDistribution {
            alpha,
            anchor,
            per_class,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let params = self
            .store
            .iter()
            .map(|(name, t)| ParamBlock {
                name: name.to_string(),
                shape: t.shape.clone(),
                values: t.values.clone(),
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            params,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format {
                expected: MODEL_FORMAT.into(),
                found: file.format,
            });
        }
        let mut model = Self::new(file.config, 0)?;
        if file.params.len() != model.store.len() {
            return Err(Error::Malformed {
                what: "model",
                reason: format!(
                    "{} parameter blocks, expected {}",
                    file.params.len(),
                    model.store.len()
                ),
            });
        }
        for block in file.params {
            let id = model
                .store
                .find(&block.name)
                .ok_or_else(|| Error::Malformed {
                    what: "model",
                    reason: format!("unknown parameter block `{}`", block.name),
                })?;
            let slot = model.store.get_mut(id);
            if slot.shape != block.shape || block.values.len() != slot.len() {
                return Err(Error::Malformed {
                    what: "model",
                    reason: format!(
                        "`{}` has shape {:?} with {} values, expected {:?}",
                        block.name,
                        block.shape,
                        block.values.len(),
                        slot.shape
                    ),
                });
            }
            *slot = Tensor::new(block.shape, block.values);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn mixture_at(raw: &[f64], anchor: [f64; 2]) -> GaussianMixture {
    let comps = mixture_components(raw);
    let weights = comps.iter().map(|c| c.weight).collect();
    let gaussians = comps
        .iter()
        .map(|c| {
            let (sx, sy) = (c.sigma[0], c.sigma[1]);
            let cross = c.rho * sx * sy;
            GaussianNd::new(
                Vector::from_slice(&[anchor[0] + c.offset[0], anchor[1] + c.offset[1]]),
                Matrix::from_rows(2, 2, &[sx * sx, cross, cross, sy * sy]),
            )
        })
        .collect();
    GaussianMixture::new(weights, gaussians).expect("softmax weights lie on the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::check_gradients;
    use crate::sim::{generate_dataset, window, SimConfig};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            detach_context: false,
            encoder_hidden: 4,
            decoder_hidden: 4,
            embedding: 4,
            horizon: 3,
            ..ModelConfig::default()
        }
    }

    fn record(id: usize) -> WindowRecord {
        let d = generate_dataset(&SimConfig {
            n_trajectories: 20,
            seed: 11,
            ..SimConfig::default()
        })
        .unwrap();
        window(&d.samples[id], 8, 16)
    }

    #[test]
    fn output_shapes() {
        let m = RnnImmModel::new(ModelConfig::default(), 1).unwrap();
        let r = record(0);
        let (x_hat, alpha) = m.encode(&r.features);
        assert!(x_hat.iter().all(|v| v.is_finite()));
        assert_eq!(alpha.len(), 2);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let f = m.predict(&r.features);
        assert_eq!(f.per_class.len(), 2);
        assert!(f
            .per_class
            .iter()
            .all(|steps| steps.len() == 16 && steps.iter().all(|m| m.len() == 1)));
    }

    #[test]
    fn zero_model_is_undecided() {
        let mut m = RnnImmModel::new(ModelConfig::default(), 1).unwrap();
        m.params_mut().fill(0.0);
        let r = record(3);
        assert_eq!(m.encode(&r.features).1, vec![0.5, 0.5]);
        let (loss, _) = m.loss_total(&r);
        // CE ln 2, MSE of the raw residual, unit-variance NLL per step at zero offset.
        let ex = TrainingExample::new(&r, m.config());
        let mse = (ex.current[0].powi(2) + ex.current[1].powi(2)) / 2.0;
        let nll: f64 = ex
            .future
            .iter()
            .map(|p| (2.0 * std::f64::consts::PI).ln() + 0.5 * (p[0] * p[0] + p[1] * p[1]))
            .sum();
        assert!((loss - (std::f64::consts::LN_2 + mse + nll)).abs() < 1e-9);
    }

    #[test]
    fn full_model_gradient_check() {
        for every_step in [true, false] {
            let config = ModelConfig {
                context_every_step: every_step,
                ..tiny_config()
            };
            let mut m = RnnImmModel::new(config, 5).unwrap();
            let mut rng = Rng::new(6);
            let ids: Vec<_> = m.params().ids().collect();
            for id in ids {
                for v in &mut m.params_mut().get_mut(id).values {
                    *v += rng.normal(0.0, 0.2);
                }
            }
            let ex = TrainingExample::new(&record(1), m.config());
            let (layers, cfg) = (m.layers(), m.config().clone());
            check_gradients(m.params_mut(), |t| layers.loss(t, &cfg, &ex));
        }
    }

    #[test]
    fn bridge_between_different_hidden_sizes() {
        let config = ModelConfig {
            decoder_hidden: 5,
            ..tiny_config()
        };
        let mut m = RnnImmModel::new(config, 2).unwrap();
        assert!(m.params().find("bridge.weight").is_some());
        let ex = TrainingExample::new(&record(2), m.config());
        let (layers, cfg) = (m.layers(), m.config().clone());
        check_gradients(m.params_mut(), |t| layers.loss(t, &cfg, &ex));
    }

    #[test]
    fn translation_equivariance() {
        let m = RnnImmModel::new(ModelConfig::default(), 9).unwrap();
        let r = record(4);
        let d = [3.25, -1.5];
        let shifted: Vec<[f64; 4]> = r
            .features
            .iter()
            .map(|f| [f[0] + d[0], f[1] + d[1], f[2], f[3]])
            .collect();
        let (a, b) = (m.predict(&r.features), m.predict(&shifted));
        assert!((b.anchor[0] - a.anchor[0] - d[0]).abs() < 1e-12);
        for step in 1..=16 {
            let (ma, mb) = (a.mean(step), b.mean(step));
            assert!((mb[0] - ma[0] - d[0]).abs() < 1e-12 && (mb[1] - ma[1] - d[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn persistence_round_trip_and_validation() {
        let m = RnnImmModel::new(tiny_config(), 3).unwrap();
        let text = m.to_json().unwrap();
        let back = RnnImmModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);

        let wrong_version = text.replace(MODEL_FORMAT, "mf-model/0");
        assert!(matches!(
            RnnImmModel::from_json(&wrong_version),
            Err(Error::Format { .. })
        ));

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["params"][0]["shape"] = serde_json::json!([3, 3]);
        let err = RnnImmModel::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("embed.weight"), "{err}");
    }
}
