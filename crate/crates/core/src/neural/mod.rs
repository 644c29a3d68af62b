//! Small reverse-mode differentiation kernel with the layers and optimizer
//! used by the recurrent forecaster.
//!
//! Computations are recorded on a [`Tape`] of vector-valued nodes. Weights
//! live in a [`ParamStore`] and are read in place by matrix-vector nodes;
//! [`Tape::backward`] accumulates into a [`Gradients`] buffer aligned with
//! the store.

mod gradcheck;
mod layers;
mod optim;
mod tape;

pub use gradcheck::{finite_difference_check, gradient_check, GradientCheck};
pub use layers::{Activation, Dense, LstmCell};
pub use optim::{clip_global_norm, Adam, LrSchedule};
pub use tape::{
    mixture_components, sigmoid, softmax, BivariateComponent, Gradients, ParamId, ParamStore, Tape,
    Tensor, Var, CE_EPS, LOG_SIGMA_RANGE, MIXTURE_PARAMS_PER_COMPONENT, RHO_MAX,
};

#[cfg(test)]
pub(crate) use tape::tests::check_gradients;
