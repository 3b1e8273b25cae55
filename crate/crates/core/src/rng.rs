//! Named random substreams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const NEGATIVES: &str = "negatives";
pub const PAIRS: &str = "pair-sampling";
pub const SPLITS: &str = "splits";
pub const GENERATOR: &str = "generator";

/// Independent generator for `stream`; the same `(seed, stream)` always
/// yields the same sequence.
pub fn substream(seed: u64, stream: &str) -> Rng {
    // FNV-1a over the stream name, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
