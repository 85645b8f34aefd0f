//! Simulation of the global photospheric magnetic flux with ensemble data
//! assimilation.
//!
//! The library couples a latitude–longitude flux transport model
//! (differential rotation, meridional flow, stochastic supergranular
//! diffusion, random background flux emergence) to three ensemble analysis
//! kernels: a pixel-wise ensemble least squares update (ENLS), a global
//! ensemble transform Kalman filter (ETKF), and its localized variant
//! (LETKF). A twin-experiment harness generates synthetic disk observations
//! of a hidden truth map and scores each method against it.

// Validation uses `!(x > 0.0)` so NaN parameters are rejected along with
// out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assim;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod grid;
pub mod map;
pub mod mapio;
pub mod obs;
pub mod rng;
pub mod runner;
pub mod transport;

pub use error::{Error, Result};
pub use grid::Grid;
pub use map::SynopticMap;
