//! Resource-block scheduling sandbox.
//!
//! A base station hands out a fixed budget of discrete resource blocks
//! per time step to users whose jobs arrive randomly, fade on a Rayleigh
//! channel, and expire on deadlines — with one priority (emergency
//! vehicle) user whose timeouts carry an extra penalty. This crate
//! bundles:
//!
//! * [`env`] — the deterministic discrete-time world (mobility, channel,
//!   job queue);
//! * [`metrics`] — the four sub-metrics and their weighted sum utility;
//! * [`baselines`] — max-throughput, max-min-fair, delay-sensitive and
//!   random schedulers;
//! * [`nn`] — a from-scratch dense network with exact backprop and Adam;
//! * [`ddpg`] — the actor-critic learning scheduler with prioritized
//!   replay and feasibility post-processing;
//! * [`harness`] — seeded train/eval/baseline runs, CSV logging, and
//!   cumulative-histogram export.
//!
//! The `examples/` directory walks through each capability; the
//! `rbsched` binary exposes the same machinery as `train`, `eval`,
//! `baseline` and `export` subcommands.

pub mod baselines;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
