//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator seeded with a
//! *master seed* and positioned on an explicit *stream*.  The derivation rule
//! is fixed:
//!
//! * trajectory `t` of an estimator run with seed `s` uses
//!   `ChaCha8Rng::seed_from_u64(s)` with `set_stream(t)`;
//! * independent sub-tasks (probes of a scan, trials of a mixing test, the
//!   perturbations themselves) first derive a child seed with
//!   [`derive_seed`]`(s, tag)` and then apply the trajectory rule.
//!
//! Because the stream of a work item depends only on its index, results do
//! not depend on how rayon schedules the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for work item `stream` under `master`.
pub fn stream_rng(master: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Child seed for a tagged sub-task (splitmix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
