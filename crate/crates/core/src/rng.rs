//! Seeded random streams.
//!
//! All randomness in the workspace flows through ChaCha8, a counter-based
//! generator whose output is fully determined by `(seed, stream, counter)`.
//! Each purpose (weight init, masking, Rademacher signs, minibatch
//! selection, ...) draws from its own stream so that adding draws to one
//! consumer never perturbs another. This is what makes paired runs
//! (e.g. regularized vs unregularized with the same seed) bit-comparable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream identifiers, one per consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Weight initialization.
    Init = 1,
    /// Mask index selection.
    Mask = 2,
    /// Rademacher sign configurations.
    Rademacher = 3,
    /// Pre-training minibatch selection.
    Batch = 4,
    /// Downstream minibatch selection (dual updates).
    BatchDownstream = 5,
    /// Synthetic data generation.
    Data = 6,
    /// Property-test / verifier sampling.
    Probe = 7,
    /// Uniform iterate selection at the end of minimax training.
    IterateChoice = 8,
    /// Test-set generation in comparison experiments.
    TestData = 9,
}

/// A deterministic RNG for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Sub-streams for per-trial or per-config draws inside one purpose.
/// Offsets keep trials independent without re-seeding.
pub fn substream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream as u64) << 32 | index);
    rng
}
