//! Momentum LMS (MLMS) and its baselines for tracking time-varying linear
//! regression parameters.
//!
//! The crate is organized around the data model
//!
//! ```text
//! y[k+1] = phi[k]^T theta[k] + v[k+1]
//! ```
//!
//! where `theta[k]` drifts over time and an online filter produces estimates
//! `theta_hat[k]` from the stream of `(phi[k], y[k+1])` pairs.
//!
//! * [`filters`]: MLMS, projected MLMS and the SGD / SGD-momentum / NLMS /
//!   RLS / GNGD baselines.
//! * [`systems`]: seeded generators for jump systems, random-walk parameters
//!   and constant-parameter streams.
//! * [`theory`]: the augmented error-transition matrices, the step-size bound
//!   and decay rate, excitation estimates and a Monte Carlo product-norm probe.
//! * [`metrics`]: tracking MSE in dB, SNR, Cesàro averages and trial
//!   aggregation.
//! * [`anc`]: the speech-enhancement pipeline (WAV I/O, scene synthesis,
//!   streaming runs, β sweeps).
//!
//! A narrative guide with runnable snippets lives in the `book/` directory of
//! the repository.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anc;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod rng;
pub mod systems;
pub mod theory;

pub use error::{Error, Result};
pub use filters::{Algorithm, Filter, FilterConfig, FilterState, StepOutput};
pub use systems::Trajectory;
