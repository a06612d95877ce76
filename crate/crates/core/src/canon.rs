//! Canonical formatting, digests, and seeded randomness.
//!
//! Every artifact this toolkit writes must be byte-reproducible: floats use
//! fixed 6-decimal notation, object keys have a fixed order, and all
//! randomness flows through explicitly seeded generators.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Round half away from zero. Used for every float-to-integer conversion in
/// the imaging kernels (`f64::round` has exactly this behavior).
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Round a coordinate to 6 decimal places (the canonical wire precision).
#[inline]
pub fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Fixed-point 6-decimal rendering; never emits "-0.000000".
pub fn fmt_fixed6(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.6}")
}

/// JSON string literal (with quotes) for `s`.
pub fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Derive a per-item seed from the run seed and a stable item key, so
/// per-image randomness is independent of scheduling order.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Deterministic, platform-independent RNG for a given seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [0, 1) using the top 53 bits of the generator output.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [lo, hi).
#[inline]
pub fn uniform_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// Current timestamp in unix seconds, honoring `SOURCE_DATE_EPOCH` so
/// reproducible runs can pin it.
pub fn timestamp_unix() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(t) = v.trim().parse::<u64>() {
            return t;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Compact canonical rendering of a JSON value: object keys sorted
/// (serde_json's default map is ordered), no insignificant whitespace.
pub fn canonical_value(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("value serialization cannot fail")
}
