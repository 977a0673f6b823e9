//! River-valley loss landscapes and the learning-rate schedules that ride them.
//!
//! The crate bundles the pieces needed to study warmup-stable-decay training
//! on small, fully inspectable problems:
//!
//! * [`schedules`]: constant, cosine, WSD / WSD-S with harmonic decay, and
//!   the curvature-aware decays used on quadratics.
//! * [`landscapes`]: losses with gradient and Hessian access, plus empirical
//!   regularity-constant estimates.
//! * [`river`]: projection flow onto the river, river tracing, and the
//!   reference-flow clock.
//! * [`optim`]: gradient flow, gradient descent and SGD with anisotropic
//!   Gaussian noise, including seeded parallel ensembles.
//! * [`bigram`]: the city/name softmax model with closed-form derivatives.
//! * [`analysis`]: hill/river decompositions, time alignment, decay-phase
//!   variance recursions and interpolation probes.
//! * [`experiment`] and [`verify`]: config-driven runs and the theory
//!   verification suites used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bigram;
pub mod config;
pub mod error;
pub mod experiment;
pub mod landscapes;
pub mod numerics;
pub mod optim;
pub mod river;
pub mod schedules;
pub mod verify;

pub use error::{Error, Result};
pub use landscapes::{Landscape, QuadraticValley, Region, RegularityConstants, SineRiver, StraightValley};
pub use numerics::{EigenResult, Matrix, RngState};
pub use optim::{EnsembleStats, NoiseMode, SgdConfig, Trajectory};
pub use river::{ProjectionResult, RiverTrace};
pub use schedules::{DecayWindow, ScheduleKind, ScheduleSpec, ScheduleTable};

/// Formats a float for CSV output with 16 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        format!("{x:.15e}")
    } else {
        format!("{x}")
    }
}

/// Formats a point as comma-separated coordinates.
pub fn fmt_point(w: &[f64]) -> String {
    w.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}
