mod common;

use common::*;
use num_complex::Complex64;
use rand::Rng;
use skg_core::capacity::{
    capacity_determinant, capacity_monte_carlo, capacity_parallel, capacity_woodbury, capacity_woodbury_cov,
    TrainingSequence,
};
use skg_core::rng::{seeded, substream};
use skg_core::{random, CMatrix, HermitianMatrix, UserStatistics};

#[test]
fn determinant_and_woodbury_agree() {
    let mut rng = seeded(101);
    for _ in 0..100 {
        let (m, s, t) = random_dims(&mut rng);
        let user = random_user(&mut rng, m, s);
        let seq = random_sequence(&mut rng, m, t);
        let noise = random::log_uniform(0.1, 10.0, &mut rng);
        let a = capacity_determinant(&user, &seq, noise).unwrap();
        let b = capacity_woodbury(&user, &seq, noise).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn fixed_random_instance_m4_s3_t2() {
    let mut rng = seeded(7);
    let user = random_user(&mut rng, 4, 3);
    let seq = random_sequence(&mut rng, 4, 2);
    let a = capacity_determinant(&user, &seq, 1.0).unwrap();
    let b = capacity_woodbury(&user, &seq, 1.0).unwrap();
    assert!(a > 0.0);
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn mode_aligned_sequence_matches_parallel_form() {
    let mut rng = seeded(5);
    for _ in 0..50 {
        let m = rng.random_range(1..=8);
        let s = rng.random_range(1..=m.min(4));
        let user = random_user(&mut rng, m, s);
        let powers: Vec<f64> = (0..s)
            .map(|_| random::log_uniform(0.01, 100.0, &mut rng))
            .collect();
        // S_DL^H = P^{1/2} Q^H
        let sqrt_p = CMatrix::from_fn(s, s, |i, j| {
            if i == j {
                Complex64::new(powers[i].sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let seq = TrainingSequence::new(user.modes.vectors() * sqrt_p).unwrap();
        let noise = 0.7;
        let dl: Vec<f64> = powers.iter().map(|p| p / noise).collect();
        let closed = capacity_parallel(user.modes.gains(), user.uplink_snr, &dl).unwrap();
        let wood = capacity_woodbury(&user, &seq, noise).unwrap();
        let det = capacity_determinant(&user, &seq, noise).unwrap();
        assert!((closed - wood).abs() < 1e-9, "{closed} {wood}");
        assert!((closed - det).abs() < 1e-9);
    }
}

#[test]
fn monotone_in_training_and_uplink_snr() {
    let mut rng = seeded(9);
    for _ in 0..50 {
        let (m, s, t) = random_dims(&mut rng);
        let user = random_user(&mut rng, m, s);
        let c = random_sequence(&mut rng, m, t).covariance();
        let v = random::gaussian_matrix(m, 1, &mut rng);
        let bigger = c.add(&HermitianMatrix::gram(&v));
        let base = capacity_woodbury_cov(&user, &c, 1.0).unwrap();
        assert!(capacity_woodbury_cov(&user, &bigger, 1.0).unwrap() >= base - 1e-12);
        let louder = UserStatistics::new(user.modes.clone(), user.uplink_snr * 2.0).unwrap();
        assert!(capacity_woodbury_cov(&louder, &c, 1.0).unwrap() >= base - 1e-12);
        assert!(base >= 0.0);
    }
}

#[test]
fn monte_carlo_tracks_analytic_value() {
    // lambda = [1], rho_UL = 1, rho_DL = 1.
    let user = diag_user(1, 0, &[1.0], 1.0);
    let seq = TrainingSequence::new(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))).unwrap();
    let target = (4.0f64 / 3.0).log2();
    let est = capacity_monte_carlo(&user, &seq, 1.0, 100_000, &mut seeded(1)).unwrap();
    assert!((est.estimate - target).abs() <= 3.0 * est.stderr, "{est:?}");

    // Random 3-mode instance.
    let mut rng = seeded(33);
    let user = random::user(5, 3, (0.5, 5.0), 3.0, &mut rng);
    let seq = random_sequence(&mut rng, 5, 3);
    let exact = capacity_woodbury(&user, &seq, 1.0).unwrap();
    let est = capacity_monte_carlo(&user, &seq, 1.0, 100_000, &mut substream(33, 1)).unwrap();
    assert!(
        (est.estimate - exact).abs() <= 3.0 * est.stderr,
        "{est:?} vs {exact}"
    );
    assert!(est.stderr < 0.02);
}
