//! Seed derivation.
//!
//! A single root seed fans out into independent streams addressed by a
//! purpose tag and a short index path, e.g. `(Purpose::Signals, [rep, vertex, k])`.
//! The path is folded through SplitMix64 and the result seeds a ChaCha8
//! generator, so any stream can be regenerated in isolation without
//! replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is mixed into the seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Labels = 1,
    Edges = 2,
    Beliefs = 3,
    Signals = 4,
    Initial = 5,
    Tree = 6,
    TreeValues = 7,
    Stationary = 8,
    Concentration = 9,
    Replication = 10,
    Outer = 11,
    Diagnostic = 12,
    Isolation = 13,
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `(root, purpose, path)` into a 64-bit stream key.
pub fn derive_seed(root: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ splitmix64(purpose as u64));
    for (depth, &p) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(p.wrapping_add((depth as u64 + 1) << 56)));
    }
    h
}

/// Generator for the stream `(root, purpose, path)`.
pub fn stream(root: u64, purpose: Purpose, path: &[u64]) -> SimRng {
    let key = derive_seed(root, purpose, path);
    let mut seed = [0u8; 32];
    let mut h = key;
    for chunk in seed.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
