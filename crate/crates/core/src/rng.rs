//! Keyed, counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream identified by
//! `(seed, stage, index, sub_index)`. A stream is a SplitMix64 sequence whose
//! starting point is derived by hashing the key, so the n-th value of a
//! stream depends only on the key and `n`. Per-pixel work can therefore be
//! split across any number of threads without changing a single output bit.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulation stage that owns a family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    CisNoise,
    Faults,
    Mismatch,
    ThresholdNoise,
    /// Free-form stage tag, used by tests and tooling.
    Custom(u64),
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::CisNoise => 0x6369_735f_6e6f_6973,
            Stage::Faults => 0x6661_756c_7473_0000,
            Stage::Mismatch => 0x6d69_736d_6174_6368,
            Stage::ThresholdNoise => 0x7468_725f_6e6f_6973,
            Stage::Custom(t) => mix64(t ^ 0x6375_7374_6f6d_0000),
        }
    }
}

/// Identifies one stream: a stage, a pixel index (or [`StreamId::GLOBAL`])
/// and an optional sub-index such as a frame number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub stage: Stage,
    pub index: u64,
    pub sub_index: u64,
}

impl StreamId {
    pub const GLOBAL: u64 = u64::MAX;

    pub fn pixel(stage: Stage, pixel: usize) -> Self {
        StreamId {
            stage,
            index: pixel as u64,
            sub_index: 0,
        }
    }

    pub fn pixel_frame(stage: Stage, pixel: usize, frame: u64) -> Self {
        StreamId {
            stage,
            index: pixel as u64,
            sub_index: frame,
        }
    }

    pub fn global(stage: Stage) -> Self {
        StreamId {
            stage,
            index: Self::GLOBAL,
            sub_index: 0,
        }
    }
}

/// A deterministic random stream. Cheap to create (two words of state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    state: u64,
}

/// Returns the stream for `(seed, id)`. Equal arguments always give the same
/// sequence of values.
pub fn rng_for(seed: u64, id: StreamId) -> StreamRng {
    let mut k = mix64(seed ^ 0x5EED_5EED_5EED_5EED);
    k = mix64(k ^ id.stage.tag());
    k = mix64(k.wrapping_add(GOLDEN_GAMMA) ^ id.index);
    k = mix64(k.wrapping_add(GOLDEN_GAMMA) ^ id.sub_index);
    StreamRng { state: k }
}

impl StreamRng {
    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Zero-mean Gaussian draw with standard deviation `sigma`.
    /// A zero sigma consumes no randomness.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(self);
        z * sigma
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
