//! Controlled sensing over discrete-time Markov chains.
//!
//! A finite-state Markov chain evolves in discrete time; at each step a
//! controller allocates a sample budget across a bank of sensors, receives a
//! jointly Gaussian observation whose statistics depend on the hidden state
//! and the allocation, and updates a Kalman-like belief over the state. The
//! crate provides the belief filter, a generalized Fisher information measure
//! over the discrete state variable, greedy and dynamic-programming selection
//! policies, and a config-driven experiment harness.

pub mod error;
pub mod filter;
pub mod fisher;
pub mod harness;
pub mod markov;
pub mod policies;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};

/// Canonical float formatting for CSV output: 9 significant digits,
/// scientific notation, so reruns are byte-identical across platforms.
pub fn fmt_g9(x: f64) -> String {
    format!("{:.8e}", x)
}
