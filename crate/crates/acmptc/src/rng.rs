//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a user-supplied `u64` seed
//! through [`derive_rng`]. Domains keep the exogenous network process, the
//! scheduler/agent process, and parameter initialization on independent
//! streams so that, e.g., a scheduler that samples more actions cannot
//! perturb the network trajectory it is evaluated on.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random-stream domains hanging off one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngDomain {
    /// Path dynamics and background traffic (exogenous; scheduler-independent).
    Dynamics,
    /// Scheduler and agent action sampling.
    Scheduler,
    /// Network/agent parameter initialization.
    Init,
    /// Training-time episode scheduling.
    Training,
}

impl RngDomain {
    fn tag(self) -> u64 {
        match self {
            RngDomain::Dynamics => 0x01,
            RngDomain::Scheduler => 0x02,
            RngDomain::Init => 0x03,
            RngDomain::Training => 0x04,
        }
    }
}

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive the RNG for `(seed, domain)`. Same inputs, same stream, always.
pub fn derive_rng(seed: u64, domain: RngDomain) -> ChaCha8Rng {
    derive_rng_indexed(seed, domain, 0)
}

/// Derive a child seed, e.g. one per training episode.
pub fn subseed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x51ed_2701)))
}

/// Like [`derive_rng`] but with an extra index (episode number, agent id)
/// for families of independent streams under one domain.
pub fn derive_rng_indexed(seed: u64, domain: RngDomain, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ domain.tag().wrapping_mul(0xa076_1d64_78bd_642f)) ^ index);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(domain.tag());
    rng
}
