//! Power allocation for the fading cognitive multiple-access channel (C-MAC)
//! when the secondary base station decodes without successive interference
//! cancellation.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: block-fading channel states with counter-based seeding.
//! - [`rate`]: per-user and sum rates with and without SIC, plus the
//!   closed-form coordinate gradient of the no-SIC sum rate.
//! - [`peak_solver`]: per-state solvers under peak transmit-power and peak
//!   interference-power constraints (extreme-point search, D-TDMA, the
//!   ordered-channel linear algorithm, SIC-OP and the hybrid heuristic).
//! - [`avg_solver`]: the D-TDMA dual policy under average constraints.
//! - [`oracle`]: brute-force verifiers used by tests and acceptance runs.
//! - [`montecarlo`]: ergodic-rate estimation and CSV/JSON reports.
//! - [`cli`]: the `cmac` command-line front end.
//!
//! All rates are in nats.

pub mod avg_solver;
pub mod channel;
pub mod cli;
pub mod error;
pub mod montecarlo;
pub mod oracle;
pub mod peak_solver;
pub mod rate;

pub use error::{Error, Result};
