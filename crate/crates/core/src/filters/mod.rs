//! Classical reference predictors: Kalman filter, IMM filter and a
//! least-squares linear extrapolation.

mod imm;
mod kalman;

pub use imm::{imm_filter_track, on_simplex, tpm_from_sojourn, ImmState, ImmStepReport};
pub use kalman::{filter_track, InitialUncertainty, KalmanState, KalmanUpdate, LIKELIHOOD_FLOOR};

use crate::numerics::{GaussianMixture, GaussianNd, Matrix, Vector};

/// Per-step predictive distribution over position.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub per_step: Vec<GaussianMixture>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    /// Predictive mean of the first coordinate at 1-based step `step`.
    pub fn mean_position(&self, step: usize) -> f64 {
        self.per_step[step - 1].mean()[0]
    }
}

/// Ordinary least-squares line through `obs` (equally spaced), extrapolated
/// `steps` samples past the last observation. The spacing cancels out, so
/// time is measured in samples.
pub fn linear_baseline(obs: &[f64], steps: usize) -> Forecast {
    assert!(
        obs.len() >= 2,
        "linear extrapolation needs at least two observations"
    );
    assert!(steps >= 1, "forecast horizon must be at least one step");
    let (slope, intercept) = ols_line(obs);
    let last = (obs.len() - 1) as f64;
    let per_step = (1..=steps)
        .map(|k| {
            let x = intercept + slope * (last + k as f64);
            GaussianMixture::single(GaussianNd::new(
                Vector::from_slice(&[x]),
                Matrix::zeros(1, 1),
            ))
        })
        .collect();
    Forecast { per_step }
}

/// Slope and intercept of the least-squares fit of `y` against `0..n`.
pub(crate) fn ols_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    (slope, y_mean - slope * t_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn linear_input_continues_exactly() {
        let obs: Vec<f64> = (0..8).map(|k| 0.5 + 0.25 * k as f64).collect();
        let f = linear_baseline(&obs, 16);
        for k in 1..=16 {
            assert!((f.mean_position(k) - (0.5 + 0.25 * (7 + k) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_stays_constant() {
        let f = linear_baseline(&[2.5; 8], 4);
        assert!(f.per_step.iter().all(|m| (m.mean()[0] - 2.5).abs() < 1e-15));
    }

    #[test]
    fn noisy_input_matches_closed_form_ols() {
        let mut rng = Rng::new(2);
        let obs: Vec<f64> = (0..8)
            .map(|k| 0.1 * k as f64 + rng.normal(0.0, 0.05))
            .collect();
        // Closed-form normal equations with raw sums.
        let n = 8.0;
        let (st, sy, stt, sty) =
            obs.iter()
                .enumerate()
                .fold((0.0, 0.0, 0.0, 0.0), |acc, (t, y)| {
                    let t = t as f64;
                    (acc.0 + t, acc.1 + y, acc.2 + t * t, acc.3 + t * y)
                });
        let slope = (n * sty - st * sy) / (n * stt - st * st);
        let intercept = (sy - slope * st) / n;
        let f = linear_baseline(&obs, 3);
        for k in 1..=3 {
            let expected = intercept + slope * (7 + k) as f64;
            assert!((f.mean_position(k) - expected).abs() < 1e-9);
        }
    }
}
