//! Seeded random streams.
//!
//! Every consumer of randomness in a training run draws from its own
//! ChaCha stream so that, for example, changing how a selection mask is
//! sampled never shifts the augmentation draws that follow it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Snapshot of a ChaCha stream position, enough to restore it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Independent streams used by the training loop.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub selection: Rng,
    pub augment: Rng,
    pub policy: Rng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            selection: stream(seed, 1),
            augment: stream(seed, 2),
            policy: stream(seed, 3),
        }
    }
}
