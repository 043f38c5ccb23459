//! Reproducible random number generation.
//!
//! All Monte Carlo draws in the crate come from ChaCha8 streams: a
//! counter-based generator whose `(seed, stream)` addressing gives each path
//! or node an independent substream. Normal variates are produced by inverse
//! CDF so that the same `(seed, stream, position)` yields the same draw on
//! every platform and regardless of thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Substream `stream` of the generator family identified by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in the open interval (0, 1): 53 random mantissa bits offset
/// by half an ulp, so the inverse normal CDF never sees 0 or 1.
#[inline]
pub fn uniform_open(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inverse CDF.
#[inline]
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u = uniform_open(rng);
    std_normal().inverse_cdf(u)
}

#[inline]
pub(crate) fn std_normal() -> Normal {
    Normal::standard()
}
