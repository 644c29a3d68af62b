//! Discretised constant-velocity and constant-acceleration motion models.
//!
//! Process noise follows `Q(dt) = Q0(dt) * q` where `q` is the continuous-time
//! spectral density of the highest modelled derivative. The discretisation
//! keeps the last diagonal entry equal to `dt * q` in both models.

use serde::{Deserialize, Serialize};

use crate::numerics::{GaussianNd, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Cv,
    Ca,
}

/// Linear-Gaussian state-space model for one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub kind: MotionKind,
    pub transition: Matrix,
    pub process_noise: Matrix,
    pub observation: Matrix,
    pub observation_noise: Matrix,
    pub dt: f64,
}

impl StateSpaceModel {
    pub fn state_dim(&self) -> usize {
        self.transition.rows()
    }
}

/// Process noise spectral densities of the reference filters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma_imm_cv: f64,
    pub sigma_imm_ca: f64,
    pub sigma_kf_cv: f64,
    pub sigma_kf_ca: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_imm_cv: 0.70,
            sigma_imm_ca: 0.80,
            sigma_kf_cv: 0.77,
            sigma_kf_ca: 0.44,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.sigma_imm_cv,
            self.sigma_imm_ca,
            self.sigma_kf_cv,
            self.sigma_kf_ca,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(crate::Error::Config(format!(
                "noise parameters must be positive: {self:?}"
            )))
        }
    }
}

pub fn build_cv(dt: f64, q: f64, obs_var: f64) -> StateSpaceModel {
    assert!(
        dt > 0.0 && q >= 0.0 && obs_var >= 0.0,
        "build_cv: invalid parameters"
    );
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    StateSpaceModel {
        kind: MotionKind::Cv,
        transition: Matrix::from_rows(2, 2, &[1.0, dt, 0.0, 1.0]),
        process_noise: Matrix::from_rows(2, 2, &[dt3 / 3.0, dt2 / 2.0, dt2 / 2.0, dt]).scale(q),
        observation: Matrix::from_rows(1, 2, &[1.0, 0.0]),
        observation_noise: Matrix::from_diag(&[obs_var]),
        dt,
    }
}

pub fn build_ca(dt: f64, q: f64, obs_var: f64) -> StateSpaceModel {
    assert!(
        dt > 0.0 && q >= 0.0 && obs_var >= 0.0,
        "build_ca: invalid parameters"
    );
    let p = |k: i32| dt.powi(k);
    #[rustfmt::skip]
    let q0 = [
        p(5) / 20.0, p(4) / 8.0, p(3) / 6.0,
        p(4) / 8.0,  p(3) / 3.0, p(2) / 2.0,
        p(3) / 6.0,  p(2) / 2.0, dt,
    ];
    StateSpaceModel {
        kind: MotionKind::Ca,
        transition: Matrix::from_rows(3, 3, &[1.0, dt, p(2) / 2.0, 0.0, 1.0, dt, 0.0, 0.0, 1.0]),
        process_noise: Matrix::from_rows(3, 3, &q0).scale(q),
        observation: Matrix::from_rows(1, 3, &[1.0, 0.0, 0.0]),
        observation_noise: Matrix::from_diag(&[obs_var]),
        dt,
    }
}

/// Lifts a `[position, velocity]` belief into the acceleration state space
/// with zero-mean acceleration of variance `accel_var`.
pub fn embed_cv_in_ca(cv_state: &GaussianNd, accel_var: f64) -> GaussianNd {
    assert_eq!(cv_state.dim(), 2, "embed_cv_in_ca expects a 2-D state");
    let mut mean = Vector::zeros(3);
    let mut cov = Matrix::zeros(3, 3);
    for i in 0..2 {
        mean[i] = cv_state.mean[i];
        for j in 0..2 {
            cov[(i, j)] = cv_state.cov[(i, j)];
        }
    }
    cov[(2, 2)] = accel_var;
    GaussianNd::new(mean, cov)
}
