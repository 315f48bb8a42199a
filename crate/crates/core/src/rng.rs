//! Seeded randomness.
//!
//! Experiments use ChaCha20, a counter-based stream generator, so a `u64`
//! seed fully determines every draw on every platform. Complex Gaussians are
//! produced from Box–Muller pairs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::PI;

pub type SimRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `stream` of a run seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard circularly-symmetric complex Gaussian, `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // u1 in (0, 1] so the log stays finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-u1.ln()).sqrt();
    Complex64::from_polar(r, 2.0 * PI * u2)
}
