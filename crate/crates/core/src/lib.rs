//! Interacting integrate-and-fire neurons whose spikes reach the soma through
//! a cable-equation kernel, and the McKean–Vlasov limit of the network.
//!
//! The crate is organized by stage:
//!
//! * [`model`]: coefficients, initial laws, weight schemes and their validation.
//! * [`kernel`]: the cable transmission kernel and its tabulation.
//! * [`particle`]: the N-neuron network in its continuous `Z = U + M` form.
//! * [`hitting`]: first-passage densities via the Bessel(3)-bridge formula.
//! * [`solver`]: Picard iteration for the expected spike count `h(t) = E[M_t]`.
//! * [`diagnostics`]: empirical checks of the mean-field limit.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod func;
pub mod hitting;
pub mod kernel;
pub mod model;
pub mod particle;
pub mod presets;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
