use crate::error::Result;
use crate::motion::StateSpaceModel;
use crate::numerics::{gaussian_log_pdf, GaussianMixture, GaussianNd, Matrix, Vector};

use super::Forecast;

/// Likelihoods below this are treated as this value.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Initial uncertainty for a filter started from two observations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialUncertainty {
    /// Velocity standard deviation, m/s.
    pub velocity_std: f64,
    /// Acceleration standard deviation, m/s^2.
    pub accel_std: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        Self {
            velocity_std: 1.0,
            accel_std: 1.0,
        }
    }
}

/// Gaussian belief over the state of one motion model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalmanState {
    pub belief: GaussianNd,
    pub model: StateSpaceModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalmanUpdate {
    pub state: KalmanState,
    /// `N(z; H x-, H P- H^T + R)`, floored at [`LIKELIHOOD_FLOOR`].
    pub likelihood: f64,
    /// Unfloored likelihood; zero when it underflows.
    pub raw_likelihood: f64,
}

impl KalmanState {
    pub fn new(belief: GaussianNd, model: StateSpaceModel) -> Self {
        assert_eq!(
            belief.dim(),
            model.state_dim(),
            "belief does not match model dimension"
        );
        Self { belief, model }
    }

    /// Warm start at the first observation: position `z0`, velocity from the
    /// first finite difference, zero acceleration,
    /// `P0 = diag(R, velocity_std^2, accel_std^2)`.
    pub fn from_first_observations(
        model: StateSpaceModel,
        z0: f64,
        z1: f64,
        init: InitialUncertainty,
    ) -> Self {
        let n = model.state_dim();
        let mut mean = Vector::zeros(n);
        mean[0] = z0;
        mean[1] = (z1 - z0) / model.dt;
        let diag = [
            model.observation_noise[(0, 0)],
            init.velocity_std.powi(2),
            init.accel_std.powi(2),
        ];
        Self::new(GaussianNd::new(mean, Matrix::from_diag(&diag[..n])), model)
    }

    pub fn predict(&self) -> KalmanState {
        let f = self.model.transition;
        let mean = f.mul_vec(&self.belief.mean);
        let cov = (f * self.belief.cov * f.transpose() + self.model.process_noise).symmetrize();
        KalmanState {
            belief: GaussianNd::new(mean, cov),
            model: self.model,
        }
    }

    /// Measurement update with a scalar position observation.
    pub fn update(&self, z: f64) -> Result<KalmanUpdate> {
        let h = self.model.observation;
        let p = self.belief.cov;
        let predicted = h.mul_vec(&self.belief.mean);
        let s = (h * p * h.transpose() + self.model.observation_noise).symmetrize();
        let s_inv = s.inverse()?;
        let gain = p * h.transpose() * s_inv;
        let zv = Vector::from_slice(&[z]);
        let innovation = zv - predicted;
        let mean = self.belief.mean + gain.mul_vec(&innovation);
        // Joseph form keeps the covariance symmetric positive semi-definite.
        let i_kh = Matrix::identity(p.rows()) - gain * h;
        let cov = (i_kh * p * i_kh.transpose()
            + gain * self.model.observation_noise * gain.transpose())
        .symmetrize();
        let raw_likelihood = gaussian_log_pdf(&zv, &GaussianNd::new(predicted, s))?.exp();
        Ok(KalmanUpdate {
            state: KalmanState {
                belief: GaussianNd::new(mean, cov),
                model: self.model,
            },
            likelihood: raw_likelihood.max(LIKELIHOOD_FLOOR),
            raw_likelihood,
        })
    }

    /// Predict then update.
    pub fn step(&self, z: f64) -> Result<KalmanUpdate> {
        self.predict().update(z)
    }

    /// Belief over the observed quantity (position) without observation noise.
    pub fn position_marginal(&self) -> GaussianNd {
        let h = self.model.observation;
        GaussianNd::new(
            h.mul_vec(&self.belief.mean),
            (h * self.belief.cov * h.transpose()).symmetrize(),
        )
    }

    /// Open-loop prediction of the position for `steps` future steps.
    pub fn forecast(&self, steps: usize) -> Forecast {
        assert!(steps >= 1, "forecast horizon must be at least one step");
        let mut state = *self;
        let per_step = (0..steps)
            .map(|_| {
                state = state.predict();
                GaussianMixture::single(state.position_marginal())
            })
            .collect();
        Forecast { per_step }
    }
}

/// Runs a filter over a sequence of scalar observations: initialised from the
/// first two, then one predict/update per observation from the second on.
pub fn filter_track(
    model: StateSpaceModel,
    obs: &[f64],
    init: InitialUncertainty,
) -> Result<KalmanState> {
    assert!(obs.len() >= 2, "need at least two observations");
    let mut state = KalmanState::from_first_observations(model, obs[0], obs[1], init);
    for &z in &obs[1..] {
        state = state.step(z)?.state;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{build_ca, build_cv};

    fn cv_state(mean: &[f64], model: StateSpaceModel) -> KalmanState {
        KalmanState::new(
            GaussianNd::new(Vector::from_slice(mean), Matrix::identity(2)),
            model,
        )
    }

    #[test]
    fn noiseless_prediction() {
        let s = cv_state(&[1.0, 2.0], build_cv(1.0, 0.0, 1.0)).predict();
        assert_eq!(s.belief.mean.as_slice(), &[3.0, 2.0]);

        let s = cv_state(&[4.2, 0.0], build_cv(0.37, 0.5, 1.0)).predict();
        assert_eq!(s.belief.mean[0], 4.2);
    }

    #[test]
    fn exact_measurement_limit() {
        let model = build_cv(0.1, 0.5, 1e-14);
        let u = cv_state(&[0.0, 1.0], model).update(0.7).unwrap();
        assert!((u.state.belief.mean[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let model = build_ca(0.1, 0.5, 0.04);
        let s = KalmanState::new(
            GaussianNd::new(
                Vector::from_slice(&[1.0, 0.5, -0.2]),
                Matrix::from_diag(&[0.3, 0.2, 0.1]),
            ),
            model,
        );
        let u = s.update(1.0).unwrap();
        assert_eq!(u.state.belief.mean, s.belief.mean);
        assert!(u.state.belief.cov[(0, 0)] < s.belief.cov[(0, 0)]);
        assert!(u.state.belief.cov.trace() < s.belief.cov.trace());
    }

    #[test]
    fn likelihood_is_innovation_density() {
        let model = build_cv(0.1, 0.5, 0.04);
        let s = cv_state(&[0.0, 1.0], model);
        let u = s.update(0.3).unwrap();
        let var: f64 = 1.0 + 0.04;
        let expected = (-0.5 * 0.09 / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        assert!((u.likelihood - expected).abs() < 1e-14);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let model = build_cv(0.1, 0.0, 0.0);
        let s = KalmanState::new(
            GaussianNd::new(Vector::zeros(2), Matrix::zeros(2, 2)),
            model,
        );
        assert!(s.update(1.0).is_err());
    }

    #[test]
    fn warm_start() {
        let model = build_ca(0.0625, 0.44, 1e-4);
        let s =
            KalmanState::from_first_observations(model, 1.0, 1.1, InitialUncertainty::default());
        assert_eq!(s.belief.mean[0], 1.0);
        assert!((s.belief.mean[1] - 1.6).abs() < 1e-12);
        assert_eq!(s.belief.mean[2], 0.0);
        assert_eq!(s.belief.cov, Matrix::from_diag(&[1e-4, 1.0, 1.0]));
    }

    #[test]
    fn forecast_examples() {
        let model = build_cv(1.0 / 16.0, 0.77, 1e-4);
        let s = cv_state(&[0.2, 1.1], model);
        let one = s.forecast(1);
        assert_eq!(one.per_step.len(), 1);
        assert_eq!(
            one.per_step[0].components()[0],
            s.predict().position_marginal()
        );

        let s = cv_state(&[0.0, 1.38], build_cv(1.0 / 16.0, 0.0, 1e-4));
        let f = s.forecast(16);
        assert_eq!(f.per_step.len(), 16);
        assert!((f.mean_position(16) - 1.38).abs() < 1e-12);
    }
}
