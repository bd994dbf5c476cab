//! Fixed problem instances shared by the solver benchmarks.

use aircomp_core::audit::{random_fdm_instance, random_tdm_slot, TdmSlot};
use aircomp_core::rng::stream_rng;
use aircomp_core::SolverInstance;

/// Reproducible TDM slot with `k` users.
pub fn tdm_slot(k: usize, seed: u64) -> TdmSlot {
    random_tdm_slot(&mut stream_rng(seed, k as u64), k)
}

/// Reproducible FDM instance with `k` users and `m` subcarriers.
pub fn fdm_instance(k: usize, m: usize, seed: u64) -> SolverInstance {
    random_fdm_instance(&mut stream_rng(seed, (k * 16 + m) as u64), k, m)
}
