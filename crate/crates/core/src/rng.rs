//! Seeded random streams. Every consumer of randomness draws from its own
//! named substream of a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substream {
    Subsample,
    ShuffleBaseline,
    Synthetic,
    /// Point subsets for quadratic-cost diagnostics.
    DiagnosticSubset,
}

impl Substream {
    fn id(self) -> u64 {
        match self {
            Substream::Subsample => 1,
            Substream::ShuffleBaseline => 2,
            Substream::Synthetic => 3,
            Substream::DiagnosticSubset => 4,
        }
    }
}

pub fn substream(seed: u64, stream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
