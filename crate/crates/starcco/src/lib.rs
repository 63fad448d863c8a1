//! Link-level simulator and multi-objective PPO optimizer for coverage and
//! capacity in STAR-RIS assisted downlink networks.
//!
//! The crate is organized around the simulation pipeline:
//!
//! * [`scene`] — geometry: serving grid, base stations, surface placement,
//!   element layout, array responses.
//! * [`channel`] — Rician fading draws with path loss and optional spatial
//!   correlation of the surface-side NLoS components.
//! * [`metrics`] — STAR-RIS coefficients, received signals, RSRP/SINR, and
//!   the weighted coverage and capacity objectives.
//! * [`env`] — the control MDP: state encoding, actions, constraint checks,
//!   Poisson traffic weights, and the two-component reward.
//! * [`nn`] — a small policy/value network with exact reverse-mode gradients.
//! * [`moppo`] — the multi-objective PPO trainer: surrogate losses, the
//!   two-task min-norm solver, Pareto utilities, and fixed-weight baselines.
//! * [`selftest`] — independent oracle suites used by tests and the CLI.

pub mod channel;
pub mod env;
pub mod error;
pub mod metrics;
pub mod moppo;
pub mod nn;
pub mod scene;
pub mod selftest;
pub mod util;

pub use error::{Error, Result};
