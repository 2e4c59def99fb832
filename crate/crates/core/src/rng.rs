//! Named random substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator for `(seed, name)`. Different names give
/// statistically independent streams.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(seed, name))
}

/// Derives a child seed, e.g. one per actor or per scenario.
pub fn child_seed(seed: u64, name: &str, index: u64) -> u64 {
    let key = derive_key(seed ^ index.rotate_left(17), &format!("{name}/{index}"));
    u64::from_le_bytes(key[..8].try_into().expect("32-byte digest"))
}

fn derive_key(seed: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.finalize().into()
}
