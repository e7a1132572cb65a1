//! Simulation of disordered, power-law interacting Heisenberg XXZ spin
//! ensembles prepared in the x-polarized product state.
//!
//! Three engines predict the magnetization `<S_x>` under a transverse field:
//!
//! * [`ed`]: exact state-vector dynamics and the diagonal ensemble (small N),
//! * [`dtwa`]: discrete truncated Wigner trajectories (large N),
//! * [`pairs`]: strongly coupled pairs treated as isolated (GGE with mean
//!   field) or as thermalized at one global temperature.
//!
//! Units: frequencies `E / (2 pi hbar)` in MHz, times in us, lengths in um.

pub mod couplings;
pub mod dtwa;
pub mod ed;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod geometry;
pub mod pairs;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
