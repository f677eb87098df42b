//! Optimal transport between discrete measures on a globally hyperbolic
//! spacetime for the cost `c2 = (tau(y) - tau(x) - d(x, y))^2`.
//!
//! The pipeline is: build the cost matrix, solve the discrete Kantorovich
//! problem, construct potentials from the optimal support, recover the
//! transport map through the twist of `L2`, and probe the regularity of the
//! extended potential on grids.

pub mod cost;
pub mod error;
pub mod io;
pub mod kantorovich;
pub mod lagrangian;
pub mod measures;
pub mod ode;
pub mod pipeline;
pub mod potentials;
pub mod regularity;
pub mod spacetime;
pub mod transport;

pub use error::{Error, Result};
