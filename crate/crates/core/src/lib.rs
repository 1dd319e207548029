//! Susceptible → Affected → Removed diffusion of negative influence over
//! student contact networks.
//!
//! The crate is split along the analysis pipeline:
//!
//! - [`graph`]: the directed contact network, its edge-list format and
//!   synthetic generators (k-regular, k-ary trees).
//! - [`exposure`]: forum-log signals (votes, reputation, exposure index),
//!   seed selection and view-derived contact graphs.
//! - [`branching`]: the idealised wave process with fan-out `k` and
//!   per-contact probability `p`.
//! - [`sim`]: the weekly Monte Carlo engine on arbitrary graphs.
//! - [`interventions`]: quarantine / treatment transforms and paired
//!   evaluation with common random numbers.
//! - [`io`]: CSV / JSON readers and writers shared by the CLI.

pub mod branching;
pub mod exposure;
pub mod graph;
pub mod interventions;
pub mod io;
pub mod rng;
pub mod sim;

mod error;
mod par;

pub use error::{Error, Result};
pub use graph::{ContactGraph, StudentId};
