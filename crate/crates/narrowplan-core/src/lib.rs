//! Motion planning for planar serial arms in narrow workspaces.
//!
//! The library plans collision-free joint trajectories by minimizing a
//! penalized objective that combines a Gauss-Markov smoothness prior with a
//! signed-distance collision cost. Two descent engines are mixed: a
//! restart-accelerated gradient method for the well-behaved case, and an
//! adaptive stochastic method that escapes body-obstacle stuck cases where
//! per-ball collision gradients oppose each other. An incremental driver
//! ranks waypoints by local factor cost and re-optimizes only the noisy
//! sub-trajectories.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature instead of the default `std` feature on bare-metal targets.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(clippy::std_instead_of_core)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("narrowplan-core requires either the `std` or the `libm` feature");

pub mod agd;
pub mod environment;
pub mod gp;
pub mod isago;
pub mod kinematics;
pub(crate) mod math;
pub mod objective;
pub mod scenarios;
pub mod stoma;
pub mod verify;

mod error;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;
