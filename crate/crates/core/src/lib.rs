//! Numerical core for neutral McKean–Vlasov stochastic delay equations
//!
//! ```text
//! d(X(t) − D(X_t)) = b(X_t, Law(X_t)) dt + √ε σ(X_t, Law(X_t)) dW(t),   X_0 = ξ
//! ```
//!
//! and the approximation schemes used to study their small-noise large
//! deviations: the deterministic limit `X⁰`, the frozen-law process `Y^ε`,
//! the time-discretized scheme `Y^{ε,n}`, the truncated scheme `Y^{ε,R}`,
//! the interacting particle system, the skeleton maps `M` and `M^n`, and the
//! action functional `I(φ) = ½∫|φ̇|²` together with a penalty-continuation
//! minimizer for the induced rate function.
//!
//! The crate is `no_std` (it needs `alloc`). Parallel Monte Carlo drivers,
//! file formats and the command line live in the `neutral-mv-lab` crate.

#![no_std]
// `!(x > 0.0)` rejects NaN as well, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod error;
pub mod model;
pub mod noise;
mod optim;
pub mod path;
pub mod rate;
pub mod solver;
pub mod stats;
pub mod stochastic;
pub mod transport;

pub use error::{Error, Result};
pub use model::{builtin, chi_r, truncate, Coefficients, Constants, ModelSpec};
pub use noise::{NoiseBundle, StreamId};
pub use path::{EmpiricalLaw, PathGrid, Segment, TimeGrid};
pub use rate::{action, minimize_rate, Control, RareEvent, RateEstimate, RateOptions};
pub use solver::SolverOptions;
pub use transport::wasserstein2;
