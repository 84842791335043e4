//! Reproducible random streams.
//!
//! Every random draw in the crate is keyed by a [`SeedStream`], a pair of
//! master seed and stream id. Child streams are derived deterministically, so
//! the i-th simulation of a loop always sees the same numbers no matter which
//! worker thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for all simulation.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub master: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master, stream: 0 }
    }

    /// Derive an independent child stream identified by `id`.
    pub fn child(&self, id: u64) -> Self {
        Self {
            master: splitmix64(self.master ^ splitmix64(self.stream.wrapping_add(0xA5A5_5A5A))),
            stream: id,
        }
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for SeedStream {
    fn from(master: u64) -> Self {
        Self::new(master)
    }
}

/// Stream ids for the distinct stages of an experiment.
pub mod purpose {
    pub const OBSERVED: u64 = 1;
    pub const LABELED: u64 = 2;
    pub const HELDOUT: u64 = 3;
    pub const CALIBRATION: u64 = 4;
    pub const PVALUES: u64 = 5;
    pub const DIAGNOSTICS: u64 = 6;
    pub const FIT: u64 = 7;
    pub const MONTE_CARLO: u64 = 8;
    pub const ODDS_LOSS: u64 = 9;
    pub const PROPOSAL_DRAWS: u64 = 10;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_numbers() {
        let a: Vec<u64> = (0..8).map({
            let mut r = SeedStream::new(7).child(3).rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = SeedStream::new(7).child(3).rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sibling_streams_differ() {
        let root = SeedStream::new(7);
        let x: u64 = root.child(1).rng().random();
        let y: u64 = root.child(2).rng().random();
        let z: u64 = root.child(1).child(0).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }
}
