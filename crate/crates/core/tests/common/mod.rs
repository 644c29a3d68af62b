//! Independent oracles shared by the integration tests.

use maneuver_forecast::motion::{build_ca, build_cv, StateSpaceModel};
use maneuver_forecast::numerics::{sample_gaussian, GaussianNd, Matrix, Rng, Vector};
use nalgebra::{DMatrix, DVector};

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Posterior of the last state given `z_1..z_K` from the batch least-squares
/// problem over the whitened sources. With `x_j = F^j x_0 + sum_{i<=j} F^{j-i} w_i`
/// and sources `(x_0, w_1..w_K) = m + L u`, `u ~ N(0, I)`, the posterior
/// precision of `u` is `I + B^T B / r` with `B` the map from `u` to the
/// observed positions.
pub fn batch_posterior(
    model: &StateSpaceModel,
    prior: &GaussianNd,
    z: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = model.state_dim();
    let k = z.len();
    let f = to_na(&model.transition);
    let r = model.observation_noise[(0, 0)];

    let dim = n * (k + 1);
    let mut powers = vec![DMatrix::<f64>::identity(n, n)];
    for _ in 0..k {
        let next = &f * powers.last().unwrap();
        powers.push(next);
    }
    let mut map = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..=k {
        for i in 0..=j {
            map.view_mut((j * n, i * n), (n, n))
                .copy_from(&powers[j - i]);
        }
    }
    let chol = |m: &Matrix| to_na(m).cholesky().expect("positive definite").l();
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    l.view_mut((0, 0), (n, n)).copy_from(&chol(&prior.cov));
    let lq = chol(&model.process_noise);
    for i in 1..=k {
        l.view_mut((i * n, i * n), (n, n)).copy_from(&lq);
    }
    let mut m = DVector::<f64>::zeros(dim);
    for a in 0..n {
        m[a] = prior.mean[a];
    }

    let mut g = DMatrix::<f64>::zeros(k, dim);
    for j in 1..=k {
        g[(j - 1, j * n)] = 1.0;
    }
    let b = &g * &map * &l;
    let precision = DMatrix::<f64>::identity(dim, dim) + b.transpose() * &b / r;
    let u_cov = precision
        .cholesky()
        .expect("precision is positive definite")
        .inverse();
    let residual = DVector::from_column_slice(z) - &g * &map * &m;
    let u_mean = &u_cov * b.transpose() * residual / r;

    let last = map.rows(k * n, n) * &l;
    let mean = map.rows(k * n, n) * &m + &last * u_mean;
    let cov = &last * u_cov * last.transpose();
    (mean, cov)
}

/// Random CV or CA model and prior, with eight observations sampled from them.
pub fn random_scenario(rng: &mut Rng, ca: bool) -> (StateSpaceModel, GaussianNd, Vec<f64>) {
    let dt = rng.uniform_range(0.05, 0.5);
    let q = rng.uniform_range(0.05, 3.0);
    let r = rng.uniform_range(0.01, 0.5).powi(2);
    let model = if ca {
        build_ca(dt, q, r)
    } else {
        build_cv(dt, q, r)
    };
    let n = model.state_dim();
    let mean: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
    let a = Matrix::from_rows(
        n,
        n,
        &(0..n * n).map(|_| rng.normal(0.0, 0.7)).collect::<Vec<_>>(),
    );
    let cov = (a * a.transpose() + Matrix::identity(n).scale(0.05)).symmetrize();
    let prior = GaussianNd::new(Vector::from_slice(&mean), cov);
    let mut x = sample_gaussian(rng, &prior).unwrap();
    let noise = GaussianNd::new(Vector::zeros(n), model.process_noise);
    let z = (0..8)
        .map(|_| {
            x = model.transition.mul_vec(&x) + sample_gaussian(rng, &noise).unwrap();
            x[0] + rng.normal(0.0, r.sqrt())
        })
        .collect();
    (model, prior, z)
}
