//! Simulation and verification toolkit for a spatially extended stochastic
//! ion-channel model.
//!
//! Voltages live on `n` compartments of a circle and diffuse through a
//! periodic three-point Laplacian; every compartment carries `I` channel types
//! whose configurations jump as voltage-dependent continuous-time Markov
//! chains. Between jumps the voltage follows an ODE, so the coupled system is
//! a piecewise-deterministic Markov process.
//!
//! * [`model`] / [`presets`] / [`custom`]: lattice, channel models, initial-condition sampling.
//! * [`det`]: Laplacian, frozen-occupancy integrator, mean-field ODEs, heat kernel.
//! * [`stoch`]: pseudo-exact thinning, inexact leaping and a fixed-step oracle.
//! * [`averaging`]: bump kernel, local averages and the discrete corrector.
//! * [`experiments`]: error metrics, h-sweeps, slope fits and bound checks.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod custom;
pub mod det;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod io;
pub mod lattice;
pub mod model;
pub mod presets;
pub mod stoch;

pub use error::{Error, Result};
pub use lattice::CircleLattice;
pub use model::{ChannelModel, InitialData, ScalarFn, SystemState};
