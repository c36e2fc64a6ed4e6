//! Seeded random streams.
//!
//! Every random decision in a run draws from a ChaCha8 stream whose seed is
//! derived from `(experiment seed, purpose, round, index)`. Streams never
//! share state, so client updates can be scheduled in any order and the
//! distillation pool can be reconfigured without perturbing client sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep derived streams disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ClientSampling = 1,
    ClientTraining = 2,
    DistillPool = 3,
    Init = 4,
    Partition = 5,
    Data = 6,
    Bound = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically combine a base seed with a stream tag and two indices.
pub fn derive_seed(seed: u64, stream: Stream, round: u64, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ round);
    splitmix64(h ^ index)
}

pub fn stream(seed: u64, stream: Stream, round: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, round, index))
}

pub fn from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
