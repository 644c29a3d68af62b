//! Linear algebra, Gaussian primitives and the seeded generator shared by
//! every other module.

mod gaussian;
mod linalg;
mod rng;

pub use gaussian::{
    gaussian_log_pdf, log_sum_exp, mixture_log_pdf, moment_match, sample_gaussian, GaussianMixture,
    GaussianNd, WEIGHT_TOLERANCE,
};
pub use linalg::{Matrix, Vector, MAX_DIM};
pub use rng::Rng;
