//! Decentralized training of randomized neural networks, reservoirs, spline
//! filters and semi-supervised learners over simulated agent networks.
//!
//! Every distributed algorithm runs in-process: agents are indices into a
//! network, communication is a synchronous mixing step over a consensus
//! matrix. All randomness flows from explicit `u64` seeds.

pub mod consensus;
pub mod datagen;
pub mod edm_ssl;
pub mod error;
pub mod esn;
pub mod harness;
pub mod netgraph;
pub mod rvfl;
pub mod s3vm;
pub mod saf;
pub mod solvers;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Deterministic generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a tag.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
