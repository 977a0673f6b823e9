//! Shared numerical kernels.

pub mod eigen;
pub mod matrix;
pub mod ode;
pub mod rng;
pub mod stats;

pub use eigen::{sym_eigen, EigenResult};
pub use matrix::Matrix;
pub use ode::{integrate_rk4, rk4_step};
pub use rng::{normal_sample, RngState};
pub use stats::{fit_through_origin, linear_fit, spearman, LinearFit, Moments};
