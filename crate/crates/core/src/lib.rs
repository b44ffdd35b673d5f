//! Simulation and numerical analysis for stochastic hybrid dynamical systems
//! whose flow map oscillates on a fast time scale.
//!
//! A system is described by a [`SystemSpec`]: a flow map `f(x, r, tau, eps)`
//! active while the auxiliary state `r` lies in the flow set `C`, an auxiliary
//! flow `w(r)`, and jump maps `g(x, r, v)`, `h(r, v)` applied with an i.i.d.
//! random input `v` whenever `r` lies in the jump set `D`. The fast clock
//! `tau` advances at rate `1/eps`.
//!
//! The crate provides
//! - [`solver`]: seeded random hybrid solutions and ensembles,
//! - [`averaging`]: window averages, the convergence function and the
//!   average system,
//! - [`certificates`]: grid verification of Lyapunov-Foster conditions,
//! - [`stats`]: hitting times, recurrence, exponential-in-the-mean fits and
//!   epsilon sweeps,
//! - [`systems`]: the periodically jammed actuator and extremum-seeking
//!   examples plus an expression-driven loader.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod averaging;
pub mod certificates;
pub mod config;
mod error;
pub mod expr;
pub mod model;
pub mod noise;
pub mod par;
pub mod sets;
pub mod solver;
pub mod stats;
pub mod systems;

pub use error::{Result, ShdsError};
pub use model::{
    dist_to_target, hybrid_time_sum, validate_spec, HybridArc, HybridTime, JumpRecord, SamplingPlan,
    Segment, StateVec, SystemSpec, TerminalReason, ValidationReport,
};
pub use noise::JumpNoise;
pub use sets::SetDescriptor;
