//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! `(seed, stream)` pair. Two generators with the same pair produce the same
//! sequence regardless of which thread builds them or in what order, which is
//! what makes the parallel Monte-Carlo loops reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep unrelated consumers of one master seed on disjoint keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Split = 1,
    TestSets = 2,
    AttributeNoise = 3,
    StructureMask = 4,
    Training = 5,
    Attack = 6,
    Synthetic = 7,
    Soundness = 8,
}

/// Generator for substream `stream` of `seed` within `domain`.
pub fn substream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    // splitmix-style mixing so (seed, domain) pairs never alias
    let mut key = seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    key = (key ^ (key >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    key = (key ^ (key >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    key ^= key >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}
