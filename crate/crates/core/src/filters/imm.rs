//! Interacting Multiple Model filter.
//!
//! Transition matrix convention: `tpm[(i, j)]` is the probability of switching
//! from model `i` to model `j`, so every row sums to one. Mixing weights are
//! `a_{i|j} = tpm[(i,j)] * alpha_i / c_j` with `c_j = sum_i tpm[(i,j)] * alpha_i`.
//! For a symmetric transition matrix the row/column reading is irrelevant.
//!
//! Models of different state dimension are mixed in the largest state space:
//! smaller states are padded with a zero-mean acceleration of variance
//! `embed_accel_var` and projected back after mixing.

use crate::error::{Error, Result};
use crate::motion::{embed_cv_in_ca, StateSpaceModel};
use crate::numerics::{moment_match, GaussianMixture, GaussianNd, Matrix, WEIGHT_TOLERANCE};

use super::kalman::{InitialUncertainty, KalmanState, LIKELIHOOD_FLOOR};
use super::Forecast;

const MIN_NORMALIZER: f64 = 1e-300;

/// Two-state transition matrix from a mean sojourn time: `p_stay = 1 - dt / tau`,
/// remaining mass spread uniformly over the other models.
pub fn tpm_from_sojourn(models: usize, dt: f64, sojourn: f64) -> Matrix {
    assert!(
        models >= 1 && sojourn > dt,
        "sojourn time must exceed the time step"
    );
    if models == 1 {
        return Matrix::identity(1);
    }
    let stay = 1.0 - dt / sojourn;
    let switch = (1.0 - stay) / (models - 1) as f64;
    let mut tpm = Matrix::zeros(models, models);
    for i in 0..models {
        for j in 0..models {
            tpm[(i, j)] = if i == j { stay } else { switch };
        }
    }
    tpm
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmState {
    pub banks: Vec<KalmanState>,
    pub alpha: Vec<f64>,
    pub tpm: Matrix,
    pub embed_accel_var: f64,
}

/// Outcome of one IMM recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct ImmStepReport {
    /// Per-model (floored) measurement likelihoods.
    pub likelihoods: Vec<f64>,
    /// Predicted mode probabilities `c_j`.
    pub predicted_alpha: Vec<f64>,
}

impl ImmState {
    pub fn new(
        banks: Vec<KalmanState>,
        alpha: Vec<f64>,
        tpm: Matrix,
        embed_accel_var: f64,
    ) -> Self {
        let m = banks.len();
        assert!(m >= 1 && alpha.len() == m, "one mode probability per model");
        assert!(
            tpm.rows() == m && tpm.cols() == m,
            "transition matrix must be {m}x{m}"
        );
        for i in 0..m {
            let row: f64 = (0..m).map(|j| tpm[(i, j)]).sum();
            assert!(
                (row - 1.0).abs() <= WEIGHT_TOLERANCE,
                "transition matrix row {i} sums to {row}"
            );
        }
        assert!(
            on_simplex(&alpha),
            "mode probabilities not on the simplex: {alpha:?}"
        );
        Self {
            banks,
            alpha,
            tpm,
            embed_accel_var,
        }
    }

    /// Every model warm-started from the first two observations, uniform modes.
    pub fn from_first_observations(
        models: &[StateSpaceModel],
        tpm: Matrix,
        z0: f64,
        z1: f64,
        init: InitialUncertainty,
        embed_accel_var: f64,
    ) -> Self {
        let banks = models
            .iter()
            .map(|m| KalmanState::from_first_observations(*m, z0, z1, init))
            .collect::<Vec<_>>();
        let alpha = vec![1.0 / models.len() as f64; models.len()];
        Self::new(banks, alpha, tpm, embed_accel_var)
    }

    pub fn models(&self) -> usize {
        self.banks.len()
    }

    fn common_dim(&self) -> usize {
        self.banks.iter().map(|b| b.belief.dim()).max().unwrap()
    }

    fn lift(&self, belief: &GaussianNd, dim: usize) -> GaussianNd {
        match (belief.dim(), dim) {
            (a, b) if a == b => *belief,
            (2, 3) => embed_cv_in_ca(belief, self.embed_accel_var),
            (a, b) => panic!("cannot embed a {a}-D state into {b}-D"),
        }
    }

    /// Predicted mode probabilities `c_j = sum_i tpm[(i,j)] alpha_i`.
    pub fn predicted_alpha(&self) -> Vec<f64> {
        let m = self.models();
        (0..m)
            .map(|j| (0..m).map(|i| self.tpm[(i, j)] * self.alpha[i]).sum())
            .collect()
    }

    /// Mixing weights `weights[j][i] = a_{i|j}` and the normalisers `c_j`.
    pub fn mixing_weights(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let m = self.models();
        let cbar = self.predicted_alpha();
        let mut weights = Vec::with_capacity(m);
        for (j, &c) in cbar.iter().enumerate() {
            if !(c >= MIN_NORMALIZER) {
                return Err(Error::DegenerateMode);
            }
            weights.push(
                (0..m)
                    .map(|i| self.tpm[(i, j)] * self.alpha[i] / c)
                    .collect(),
            );
        }
        Ok((weights, cbar))
    }

    /// Mixed initial condition for every model, in that model's own state space.
    pub fn mix(&self) -> Result<Vec<GaussianNd>> {
        let (weights, _) = self.mixing_weights()?;
        let dim = self.common_dim();
        let lifted: Vec<GaussianNd> = self
            .banks
            .iter()
            .map(|b| self.lift(&b.belief, dim))
            .collect();
        Ok(self
            .banks
            .iter()
            .zip(weights)
            .map(|(bank, w)| {
                let mixed = moment_match(
                    &GaussianMixture::new(w, lifted.clone()).expect("mixing weights on simplex"),
                );
                if mixed.dim() == bank.belief.dim() {
                    mixed
                } else {
                    mixed.marginal_head(bank.belief.dim())
                }
            })
            .collect())
    }

    /// One full IMM recursion: mixing, per-model predict and update, mode
    /// probability update. When every likelihood underflows the banks are
    /// still updated, `alpha` is reset to uniform and
    /// [`Error::DegenerateMode`] is returned.
    pub fn step(&mut self, z: f64) -> Result<ImmStepReport> {
        let mixed = self.mix()?;
        let cbar = self.predicted_alpha();
        let mut likelihoods = Vec::with_capacity(self.models());
        let mut all_underflow = true;
        for (bank, init) in self.banks.iter_mut().zip(mixed) {
            let update = KalmanState::new(init, bank.model).step(z)?;
            all_underflow &= update.raw_likelihood < LIKELIHOOD_FLOOR;
            likelihoods.push(update.likelihood);
            *bank = update.state;
        }
        let m = self.models();
        if all_underflow {
            self.alpha = vec![1.0 / m as f64; m];
            return Err(Error::DegenerateMode);
        }
        let unnorm: Vec<f64> = cbar.iter().zip(&likelihoods).map(|(c, l)| c * l).collect();
        let total: f64 = unnorm.iter().sum();
        self.alpha = unnorm.iter().map(|u| u / total).collect();
        Ok(ImmStepReport {
            likelihoods,
            predicted_alpha: cbar,
        })
    }

    /// Moment-matched combined estimate in the largest state space.
    pub fn combine(&self) -> GaussianNd {
        let dim = self.common_dim();
        let lifted = self
            .banks
            .iter()
            .map(|b| self.lift(&b.belief, dim))
            .collect();
        moment_match(&GaussianMixture::new(self.alpha.clone(), lifted).expect("alpha on simplex"))
    }

    /// Open-loop forecast: each model predicts independently and the mode
    /// probabilities evolve through the transition matrix every step.
    pub fn forecast(&self, steps: usize) -> Forecast {
        assert!(steps >= 1, "forecast horizon must be at least one step");
        let mut banks = self.banks.clone();
        let mut modes = self.clone();
        let per_step = (0..steps)
            .map(|_| {
                modes.alpha = renormalize(modes.predicted_alpha());
                let comps = banks
                    .iter_mut()
                    .map(|b| {
                        *b = b.predict();
                        b.position_marginal()
                    })
                    .collect();
                GaussianMixture::new(modes.alpha.clone(), comps).expect("alpha on simplex")
            })
            .collect();
        Forecast { per_step }
    }
}

fn renormalize(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

pub fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= WEIGHT_TOLERANCE
}

/// Runs the IMM over a sequence of scalar observations, tolerating
/// degenerate steps (alpha is reset and filtering continues).
pub fn imm_filter_track(
    models: &[StateSpaceModel],
    tpm: Matrix,
    obs: &[f64],
    init: InitialUncertainty,
    embed_accel_var: f64,
) -> Result<ImmState> {
    assert!(obs.len() >= 2, "need at least two observations");
    let mut state =
        ImmState::from_first_observations(models, tpm, obs[0], obs[1], init, embed_accel_var);
    for &z in &obs[1..] {
        match state.step(z) {
            Ok(_) => {}
            Err(Error::DegenerateMode) => {
                log::warn!("IMM mode probabilities degenerated; reset to uniform")
            }
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kalman::filter_track;
    use crate::motion::{build_ca, build_cv};
    use crate::numerics::{Rng, Vector};

    const DT: f64 = 1.0 / 16.0;

    fn cv_ca(obs_var: f64) -> Vec<StateSpaceModel> {
        vec![build_cv(DT, 0.70, obs_var), build_ca(DT, 0.80, obs_var)]
    }

    fn bank(model: StateSpaceModel, mean: &[f64]) -> KalmanState {
        let n = model.state_dim();
        KalmanState::new(
            GaussianNd::new(Vector::from_slice(mean), Matrix::identity(n).scale(0.1)),
            model,
        )
    }

    #[test]
    fn sojourn_tpm() {
        let tpm = tpm_from_sojourn(2, DT, 1.0);
        assert_eq!(tpm[(0, 0)], 0.9375);
        assert_eq!(tpm[(0, 1)], 0.0625);
    }

    #[test]
    fn identity_tpm_keeps_each_state() {
        let models = cv_ca(1e-4);
        let s = ImmState::new(
            vec![
                bank(models[0], &[1.0, 2.0]),
                bank(models[1], &[0.5, 1.0, -1.0]),
            ],
            vec![0.3, 0.7],
            Matrix::identity(2),
            0.1,
        );
        let (w, _) = s.mixing_weights().unwrap();
        assert_eq!(w, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mixed = s.mix().unwrap();
        assert_eq!(mixed[0], s.banks[0].belief);
        assert_eq!(mixed[1], s.banks[1].belief);
    }

    #[test]
    fn mixing_weights_hand_arithmetic() {
        let models = cv_ca(1e-4);
        let s = ImmState::new(
            vec![
                bank(models[0], &[0.0, 1.0]),
                bank(models[1], &[0.0, 1.0, 0.0]),
            ],
            vec![0.8, 0.2],
            tpm_from_sojourn(2, DT, 1.0),
            0.1,
        );
        let (w, cbar) = s.mixing_weights().unwrap();
        assert!((cbar[0] - 0.7625).abs() < 1e-12);
        assert!((w[0][0] - 0.98361).abs() < 1e-5);
        assert!((w[0][1] - 0.01639).abs() < 1e-5);
    }

    #[test]
    fn identical_banks_mix_to_themselves() {
        let model = build_ca(DT, 0.8, 1e-4);
        let b = bank(model, &[0.3, 1.2, -0.4]);
        for a in [0.1, 0.5, 0.93] {
            let s = ImmState::new(
                vec![b, b],
                vec![a, 1.0 - a],
                tpm_from_sojourn(2, DT, 1.0),
                0.1,
            );
            for mixed in s.mix().unwrap() {
                assert!((mixed.mean - b.belief.mean)
                    .as_slice()
                    .iter()
                    .all(|d| d.abs() < 1e-14));
                assert!((mixed.cov - b.belief.cov).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_model_is_the_kalman_filter() {
        let model = build_cv(DT, 0.77, 1e-4);
        let obs: Vec<f64> = (0..12)
            .map(|k| 0.08 * k as f64 + 0.003 * (k as f64).sin())
            .collect();
        let imm = imm_filter_track(
            &[model],
            Matrix::identity(1),
            &obs,
            InitialUncertainty::default(),
            0.0,
        )
        .unwrap();
        let kf = filter_track(model, &obs, InitialUncertainty::default()).unwrap();
        assert_eq!(imm.banks[0], kf);
        assert_eq!(imm.alpha, vec![1.0]);
    }

    fn mean_ca_probability(obs_of: impl Fn(&mut Rng) -> Vec<f64>) -> f64 {
        let models = cv_ca(1e-4);
        let mut rng = Rng::new(4);
        let runs = 100;
        let total: f64 = (0..runs)
            .map(|_| {
                let obs = obs_of(&mut rng);
                imm_filter_track(
                    &models,
                    tpm_from_sojourn(2, DT, 1.0),
                    &obs,
                    InitialUncertainty::default(),
                    0.8 * DT,
                )
                .unwrap()
                .alpha[1]
            })
            .sum();
        total / runs as f64
    }

    // With these spectral densities the CA model is the smooth one in position
    // space (tiny jerk noise) and the CV model the agile one (large velocity
    // random walk). Straight walking therefore favours CA, and an abrupt
    // onset of braking moves weight back to CV.
    #[test]
    fn braking_onset_moves_weight_to_the_agile_model() {
        let straight = mean_ca_probability(|rng| {
            (0..20)
                .map(|k| 1.38 * DT * k as f64 + rng.normal(0.0, 0.01))
                .collect()
        });
        let braking = mean_ca_probability(|rng| {
            (0..20)
                .map(|k| {
                    let t = DT * k as f64;
                    let braking = (t - 0.5).max(0.0);
                    1.38 * t - 0.5 * 1.38 * braking * braking + rng.normal(0.0, 0.01)
                })
                .collect()
        });
        assert!(straight > 0.5, "straight {straight}");
        assert!(
            braking < straight,
            "braking {braking} vs straight {straight}"
        );
    }

    #[test]
    fn alpha_stays_on_simplex() {
        let models = cv_ca(0.04);
        let mut rng = Rng::new(8);
        let mut s = ImmState::from_first_observations(
            &models,
            tpm_from_sojourn(2, DT, 1.0),
            0.0,
            0.05,
            InitialUncertainty::default(),
            0.05,
        );
        for k in 0..200 {
            s.step(0.05 * k as f64 + rng.normal(0.0, 0.2)).unwrap();
            assert!(on_simplex(&s.alpha));
            let (w, _) = s.mixing_weights().unwrap();
            assert!(w.iter().all(|row| on_simplex(row)));
        }
    }

    #[test]
    fn degenerate_likelihoods_reset_alpha() {
        let models = vec![build_cv(DT, 1e-6, 1e-10), build_ca(DT, 1e-6, 1e-10)];
        let mut s = ImmState::from_first_observations(
            &models,
            tpm_from_sojourn(2, DT, 1.0),
            0.0,
            0.0,
            InitialUncertainty {
                velocity_std: 1e-6,
                accel_std: 1e-6,
            },
            1e-12,
        );
        s.alpha = vec![0.9, 0.1];
        assert!(matches!(s.step(1e6), Err(Error::DegenerateMode)));
        assert_eq!(s.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn combine_examples() {
        let models = cv_ca(1e-4);
        let b0 = bank(models[1], &[0.3, 1.2, -0.4]);
        let b1 = bank(models[1], &[0.1, 0.2, 0.4]);
        let s = ImmState::new(
            vec![b0, b1],
            vec![1.0, 0.0],
            tpm_from_sojourn(2, DT, 1.0),
            0.1,
        );
        assert_eq!(s.combine(), b0.belief);
        let s = ImmState::new(
            vec![b0, b0],
            vec![0.5, 0.5],
            tpm_from_sojourn(2, DT, 1.0),
            0.1,
        );
        let c = s.combine();
        assert!((c.mean - b0.belief.mean)
            .as_slice()
            .iter()
            .all(|d| d.abs() < 1e-15));
        assert!((c.cov - b0.belief.cov).max_abs() < 1e-15);
    }

    #[test]
    fn forecast_with_frozen_single_mode_is_that_model() {
        let models = cv_ca(1e-4);
        let b0 = bank(models[0], &[0.0, 1.38]);
        let b1 = bank(models[1], &[0.0, 1.0, -1.0]);
        let s = ImmState::new(vec![b0, b1], vec![1.0, 0.0], Matrix::identity(2), 0.1);
        let imm = s.forecast(10);
        let kf = b0.forecast(10);
        for (a, b) in imm.per_step.iter().zip(&kf.per_step) {
            assert_eq!(a.weights(), &[1.0, 0.0]);
            assert_eq!(a.components()[0], b.components()[0]);
            assert_eq!(a.mean()[0], b.mean()[0]);
        }
    }

    #[test]
    fn forecast_modes_follow_the_transition_matrix() {
        let models = cv_ca(1e-4);
        let s = ImmState::new(
            vec![
                bank(models[0], &[0.0, 1.0]),
                bank(models[1], &[0.0, 1.0, 0.0]),
            ],
            vec![1.0, 0.0],
            tpm_from_sojourn(2, DT, 1.0),
            0.1,
        );
        let f = s.forecast(2);
        assert!((f.per_step[0].weights()[0] - 0.9375).abs() < 1e-15);
        let expected = 0.9375 * 0.9375 + 0.0625 * 0.0625;
        assert!((f.per_step[1].weights()[0] - expected).abs() < 1e-15);
    }
}
