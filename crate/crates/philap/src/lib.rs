//! Global solution curves mu = mu(xi) of T-periodic solutions for
//! phi-Laplacian pendulum-type equations
//!
//! ```text
//! (phi(u'))' + lambda u' + k g(u) = mu + e(t),    u(t+T) = u(t),
//! ```
//!
//! where phi : (-a, a) -> R is an increasing homeomorphism (the relativistic
//! case is phi(z) = z / sqrt(1 - z^2)). The solver splits each solution into
//! its average xi and a zero-mean part U, solves the zero-mean equation by
//! Newton iteration on top of a fundamental-solution periodic linear solver,
//! reaches the target coupling k by continuation from the exactly solvable
//! k = 0 problem, and sweeps xi to trace the branch. Every accepted orbit is
//! re-integrated from its initial data as an independent check.

pub mod analysis;
pub mod cli;
pub mod continuation;
mod error;
pub mod ivp;
pub mod linear_periodic;
pub mod model;
pub mod periodic_fn;
pub mod phi_linear;

pub use error::{Error, Result};
