//! Deterministic random substreams.
//!
//! Every random draw in a study comes from a stream identified by
//! `(master_seed, purpose, index)`. The purpose and master seed select a
//! ChaCha8 key; the index selects one of the 2^64 ChaCha streams under that
//! key. Streams are therefore a pure function of their identifier and do not
//! depend on the order in which replicates are executed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datamodel::Framework;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Covariate, treatment and outcome draws for a source dataset.
    Source,
    /// One plasmode replicate under the given framework.
    Replicate(Framework),
    /// Derivation of per-source master seeds in multi-source studies.
    SourceSeed,
    /// Fresh populations for the stacked MSM truth procedure.
    MsmTruth,
    /// Free-form purpose for callers outside the built-in pipeline.
    Custom(u64),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Source => 0x5352_4300,
            Purpose::Replicate(Framework::SampleTreatment) => 0x5245_5001,
            Purpose::Replicate(Framework::GenerateTreatment) => 0x5245_5002,
            Purpose::SourceSeed => 0x5345_4400,
            Purpose::MsmTruth => 0x4d53_4d00,
            Purpose::Custom(c) => 0xC057_0000_0000_0000 ^ c,
        }
    }
}

/// Identifier of a random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub purpose: Purpose,
    pub index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, purpose: Purpose, index: u64) -> Self {
        Self {
            master_seed,
            purpose,
            index,
        }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master_seed ^ splitmix64(&mut self.purpose.code());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }

    /// A 64-bit seed derived from this stream, for seeding nested studies.
    pub fn derive_seed(&self) -> u64 {
        self.rng().next_u64()
    }
}
