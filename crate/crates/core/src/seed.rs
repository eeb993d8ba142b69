//! Named seed derivation.
//!
//! Every random component draws its seed from one root seed combined with the
//! component's name, so changing how one component consumes randomness never
//! shifts another component's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit seed for `component` from `root`.
pub fn derive_seed(root: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
