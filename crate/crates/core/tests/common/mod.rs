#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use skg_core::capacity::TrainingSequence;
use skg_core::random;
use skg_core::rng::SimRng;
use skg_core::{CMatrix, SpatialModeBasis, UserStatistics};

pub fn diag_user(m: usize, offset: usize, gains: &[f64], rho: f64) -> UserStatistics {
    let q = CMatrix::identity(m, m).columns(offset, gains.len()).into_owned();
    UserStatistics::new(SpatialModeBasis::new(q, gains.to_vec()).unwrap(), rho).unwrap()
}

pub fn random_user(rng: &mut SimRng, m: usize, s: usize) -> UserStatistics {
    let rho = random::log_uniform(0.01, 100.0, rng);
    random::user(m, s, (0.01, 100.0), rho, rng)
}

pub fn random_sequence(rng: &mut SimRng, m: usize, t: usize) -> TrainingSequence {
    let scale = random::log_uniform(0.01, 100.0, rng).sqrt();
    let g = random::gaussian_matrix(m, t, rng) * Complex64::new(scale / (m as f64).sqrt(), 0.0);
    TrainingSequence::new(g).unwrap()
}

/// (M, S, T) with M <= 8, S <= min(4, M), T <= 6.
pub fn random_dims(rng: &mut SimRng) -> (usize, usize, usize) {
    let m = rng.random_range(1..=8);
    let s = rng.random_range(1..=m.min(4));
    let t = rng.random_range(1..=6);
    (m, s, t)
}
