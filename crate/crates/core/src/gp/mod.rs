//! Gaussian-process regression: squared-exponential ARD kernel, exact
//! posterior, marginal-likelihood fitting, fantasy updates and joint sampling.

mod hyper;
mod kernel;
mod linalg;
mod model;
mod surrogate;

pub use hyper::{nlml, optimize_hyperparams, optimize_hyperparams_shared, HyperBounds, HYPER_LBFGS_ITERS};
pub use kernel::{kernel_eval, KernelHyperparams};
pub use linalg::{jitter_levels, Cholesky};
pub use model::{GpModel, JointPosterior, Prediction};
pub use surrogate::{default_hyperparams, Surrogate};
