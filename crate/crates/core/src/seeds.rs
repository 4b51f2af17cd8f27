//! Fan-out of one master seed into per-component seeds.
//!
//! `derive(master, component, index)` is the first eight bytes (little
//! endian) of `SHA-256("{master}:{component}:{index}")`. Component names
//! are fixed strings such as `"seed_population"` or `"generator"`; the
//! index is usually the evolution number.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(master: u64, component: &str, index: u64) -> u64 {
    let h = Sha256::digest(format!("{master}:{component}:{index}").as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

pub fn rng(master: u64, component: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, component, index))
}
