use std::f64::consts::PI;

use super::linalg::{Matrix, Vector};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Multivariate normal with up to three dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianNd {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianNd {
    pub fn new(mean: Vector, cov: Matrix) -> Self {
        assert!(
            cov.is_square() && cov.rows() == mean.len(),
            "gaussian: dimension mismatch"
        );
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &Vector) -> Result<f64> {
        gaussian_log_pdf(x, self)
    }

    /// Marginal over the leading `n` coordinates.
    pub fn marginal_head(&self, n: usize) -> GaussianNd {
        GaussianNd::new(self.mean.head(n), self.cov.top_left(n))
    }
}

/// `ln N(x | g.mean, g.cov)`. Fails when the covariance is not positive definite.
pub fn gaussian_log_pdf(x: &Vector, g: &GaussianNd) -> Result<f64> {
    assert_eq!(x.len(), g.dim(), "log_pdf: dimension mismatch");
    let l = g.cov.cholesky()?;
    let y = l.forward_substitute(&(*x - g.mean));
    let log_det: f64 = (0..g.dim()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (g.dim() as f64 * (2.0 * PI).ln() + log_det + y.dot(&y)))
}

/// Finite Gaussian mixture. Weights are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianNd>,
}

pub const WEIGHT_TOLERANCE: f64 = 1e-9;

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianNd>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::Malformed {
                what: "mixture",
                reason: format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                ),
            });
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Malformed {
                what: "mixture",
                reason: "mixed dimensions".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Malformed {
                what: "mixture",
                reason: format!("weights {weights:?} are not on the simplex"),
            });
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn single(g: GaussianNd) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianNd] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GaussianNd)> {
        self.weights.iter().copied().zip(self.components.iter())
    }

    pub fn mean(&self) -> Vector {
        self.iter().fold(Vector::zeros(self.dim()), |acc, (w, c)| {
            acc + c.mean.scale(w)
        })
    }

    pub fn log_pdf(&self, x: &Vector) -> Result<f64> {
        mixture_log_pdf(x, self)
    }

    /// Mixture density, with zero-covariance components contributing nothing.
    /// Intended for plotting grids, where degenerate point forecasts occur.
    pub fn pdf(&self, x: &Vector) -> f64 {
        self.iter()
            .filter(|(w, _)| *w > 0.0)
            .filter_map(|(w, c)| gaussian_log_pdf(x, c).ok().map(|lp| w * lp.exp()))
            .sum()
    }
}

/// `ln sum_l w_l N(x | mu_l, Sigma_l)` with log-sum-exp stabilisation.
pub fn mixture_log_pdf(x: &Vector, m: &GaussianMixture) -> Result<f64> {
    let mut terms = Vec::with_capacity(m.len());
    for (w, c) in m.iter() {
        if w > 0.0 {
            terms.push(w.ln() + gaussian_log_pdf(x, c)?);
        }
    }
    Ok(log_sum_exp(&terms))
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Single Gaussian with the mixture's first two moments.
pub fn moment_match(m: &GaussianMixture) -> GaussianNd {
    let mean = m.mean();
    let mut cov = Matrix::zeros(m.dim(), m.dim());
    for (w, c) in m.iter() {
        let d = c.mean - mean;
        cov = cov + (c.cov + d.outer(&d)).scale(w);
    }
    GaussianNd::new(mean, cov)
}

/// Draws one sample through the (semi-definite) Cholesky factor.
pub fn sample_gaussian(rng: &mut Rng, g: &GaussianNd) -> Result<Vector> {
    let l = g.cov.cholesky_psd()?;
    let mut z = Vector::zeros(g.dim());
    for i in 0..g.dim() {
        z[i] = rng.standard_normal();
    }
    Ok(g.mean + l.mul_vec(&z))
}
