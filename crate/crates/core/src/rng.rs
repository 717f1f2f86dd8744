//! Seeded random streams.
//!
//! Every random draw in the library comes from a [`ChaCha8Rng`] derived from a
//! root seed and a stream name, so unrelated consumers never share state and
//! editing one part of a configuration cannot shift the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives the generator for `name` under `root`.
pub fn stream(root: u64, name: &str) -> Rng {
    stream_indexed(root, name, 0)
}

/// Derives the generator for the `index`-th draw of stream `name`.
pub fn stream_indexed(root: u64, name: &str, index: u64) -> Rng {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
