//! Seed splitting.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by the
//! scenario seed. Independent streams are obtained by selecting a distinct
//! ChaCha stream id, so results never depend on how work is spread across
//! threads. Stream ids used by the harness are built with [`stream_id`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a sweep point index and a trial index into one stream id.
///
/// The point index occupies the upper 24 bits, the trial the lower 40.
pub fn stream_id(point: usize, trial: usize) -> u64 {
    ((point as u64) << 40) | (trial as u64 & ((1 << 40) - 1))
}
