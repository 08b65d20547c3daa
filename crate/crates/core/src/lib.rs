//! Allocation-only building blocks for learning bit-interleaved encodings of
//! sparse tensors.
//!
//! The crate covers everything that does not need an operating system:
//! coordinate tensors and a brute-force MTTKRP reference, bit budgets and
//! encoding plans, the encoding-construction MDP, a small from-scratch neural
//! network stack, and the double-DQN agent that drives it. Timing, files,
//! threads and sockets live in the `bitweave` crate.
#![no_std]

extern crate alloc;

pub mod agent;
pub mod env;
mod error;
pub mod kernel;
pub mod linearize;
pub mod nn;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
