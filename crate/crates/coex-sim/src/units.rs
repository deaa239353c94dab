//! Simulation time base, power unit conversions, and seeded RNG substreams.
//!
//! All simulation time is integer nanoseconds so that slot, symbol, TTI and
//! duty-cycle boundaries compare exactly and event ordering is reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Simulation time in nanoseconds since run start.
pub type Nanos = u64;

pub const NANOS_PER_SEC: Nanos = 1_000_000_000;
pub const NANOS_PER_MILLI: Nanos = 1_000_000;
pub const NANOS_PER_MICRO: Nanos = 1_000;

/// Convert seconds to nanoseconds, rounding to the nearest tick.
pub fn secs_to_nanos(s: f64) -> Nanos {
    (s * 1e9).round() as Nanos
}

pub fn nanos_to_secs(t: Nanos) -> f64 {
    t as f64 * 1e-9
}

pub fn millis_to_nanos(ms: f64) -> Nanos {
    (ms * 1e6).round() as Nanos
}

pub fn micros_to_nanos(us: f64) -> Nanos {
    (us * 1e3).round() as Nanos
}

/// dB value to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Milliwatts to dBm. Zero maps to -inf.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

// RNG substream domains. Each (seed, domain, index) triple yields an
// independent deterministic stream.
pub const DOM_TOPOLOGY: u64 = 1;
pub const DOM_SHADOWING: u64 = 2;
pub const DOM_TRAFFIC: u64 = 3;
pub const DOM_BACKOFF: u64 = 4;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a deterministic RNG for one (seed, domain, index) substream.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ domain.rotate_left(32)) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}
