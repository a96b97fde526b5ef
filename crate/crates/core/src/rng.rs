//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is derived from a
//! tuple of integers with SplitMix64 finalisers. Streams for different keys
//! are independent, so per-stay or per-job generation does not depend on
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to fold string identifiers into a key.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn fold_key(words: &[u64]) -> u64 {
    let mut acc = 0x6A09_E667_F3BC_C908u64;
    for w in words {
        acc = splitmix64(acc ^ splitmix64(*w));
    }
    acc
}

/// A 63-bit seed derived from key words; it fits a signed TOML integer.
pub fn derive_seed(words: &[u64]) -> u64 {
    splitmix64(fold_key(words)) >> 1
}

/// Derives an independent generator from a sequence of key words.
pub fn keyed(words: &[u64]) -> StreamRng {
    let mut seed = [0u8; 32];
    let mut state = fold_key(words);
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Generator for one stay's stream inside a synthetic domain.
pub fn stay_stream(seed: u64, domain_id: &str, stay_index: u64, stream: u64) -> StreamRng {
    keyed(&[seed, hash_str(domain_id), stay_index, stream])
}
