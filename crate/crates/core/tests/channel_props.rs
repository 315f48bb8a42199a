mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use skg_core::channel::{
    compact_eig, cross_user_coherence, make_clustered_covariance, make_exp_correlation, sample_channel,
    DEFAULT_RANK_TOL,
};
use skg_core::rng::seeded;
use skg_core::{random, ArrayGeometry, CMatrix, Cluster, HermitianMatrix, SpatialModeBasis};

fn assert_hermitian_psd(r: &HermitianMatrix) {
    let m = r.as_matrix();
    for i in 0..r.dim() {
        for j in 0..r.dim() {
            assert!((m[(i, j)] - m[(j, i)].conj()).norm() <= 1e-12);
        }
    }
    assert!(r.is_psd());
}

#[test]
fn exp_correlation_matches_real_eigensolve() {
    let r = make_exp_correlation(3, Complex64::new(0.9, 0.0)).unwrap();
    let basis = compact_eig(&r, 1e-8).unwrap();
    assert_eq!(basis.num_modes(), 3);
    // Independent route: real symmetric solver on the real-valued matrix.
    let real = DMatrix::from_fn(3, 3, |i, j| 0.9f64.powi((i as i32 - j as i32).abs()));
    let mut oracle: Vec<f64> = real.symmetric_eigen().eigenvalues.iter().copied().collect();
    oracle.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in basis.gains().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn sample_covariance_converges() {
    let geom = ArrayGeometry::ula(6, 0.5).unwrap();
    let r = make_clustered_covariance(&geom, &[Cluster::from_degrees(10.0, 0.0, 15.0, 1.0)]).unwrap();
    let modes = compact_eig(&r, DEFAULT_RANK_TOL).unwrap();
    let target = modes.covariance();
    let mut rng = seeded(21);
    let n = 100_000;
    let mut acc = CMatrix::zeros(6, 6);
    let mut mean = CMatrix::zeros(6, 1);
    for _ in 0..n {
        let h = sample_channel(&modes, &mut rng);
        acc += &h * h.adjoint();
        mean += &h;
    }
    let emp = acc / Complex64::new(n as f64, 0.0);
    let rel = (emp - target.as_matrix()).norm() / target.frobenius_norm();
    assert!(rel < 0.05, "relative error {rel}");
    for i in 0..6 {
        let sd = target.as_matrix()[(i, i)].re.sqrt();
        assert!(mean[(i, 0)].norm() / (n as f64) < 5.0 * sd / (n as f64).sqrt());
    }
}

#[test]
fn coherence_decreases_with_array_size() {
    let mut previous = f64::INFINITY;
    for m in [8, 32, 128] {
        let geom = ArrayGeometry::ula(m, 0.5).unwrap();
        let bases: Vec<SpatialModeBasis> = [30.0, 80.0]
            .iter()
            .map(|az| {
                let r =
                    make_clustered_covariance(&geom, &[Cluster::from_degrees(*az, 0.0, 2.0, 1.0)]).unwrap();
                compact_eig(&r, DEFAULT_RANK_TOL).unwrap()
            })
            .collect();
        let coh = cross_user_coherence(&bases).unwrap();
        assert!(coh < previous, "M={m}: {coh} >= {previous}");
        previous = coh;
    }
}

#[test]
fn coherence_symmetric_and_order_free() {
    let mut rng = seeded(8);
    let a = random::basis(6, 2, 0.5, 2.0, &mut rng);
    let b = random::basis(6, 3, 0.5, 2.0, &mut rng);
    let c = random::basis(6, 1, 0.5, 2.0, &mut rng);
    let base = cross_user_coherence(&[a.clone(), b.clone(), c.clone()]).unwrap();
    let perm = cross_user_coherence(&[c.clone(), a.clone(), b.clone()]).unwrap();
    assert!((base - perm).abs() < 1e-15);
    // Reversing b's mode order (with equalized gains to keep the basis valid).
    let rev_cols: Vec<_> = (0..3).rev().map(|j| b.vectors().column(j).into_owned()).collect();
    let b_rev = SpatialModeBasis::new(CMatrix::from_columns(&rev_cols), vec![1.0; 3]).unwrap();
    let resorted = cross_user_coherence(&[a, b_rev, c]).unwrap();
    assert!((base - resorted).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_are_hermitian_psd(
        m in 1usize..24,
        az in -80.0f64..80.0,
        el in -30.0f64..30.0,
        spread in 0.5f64..40.0,
        power in 0.1f64..10.0,
        re in -0.95f64..0.95,
        im in -0.3f64..0.3,
    ) {
        let geom = ArrayGeometry::ula(m, 0.5).unwrap();
        let r = make_clustered_covariance(&geom, &[
            Cluster::from_degrees(az, el, spread, power),
            Cluster::from_degrees(-az / 2.0, 0.0, spread / 2.0, 1.0),
        ]).unwrap();
        assert_hermitian_psd(&r);
        prop_assert!((r.trace() - m as f64).abs() <= 1e-9 * m as f64);
        let rho = Complex64::new(re, im);
        prop_assume!(rho.norm() < 0.99);
        assert_hermitian_psd(&make_exp_correlation(m, rho).unwrap());
    }

    #[test]
    fn compact_eig_reconstructs(m in 2usize..16, spread in 1.0f64..30.0, tol_exp in 3i32..10) {
        let rank_tol = 10f64.powi(-tol_exp);
        let geom = ArrayGeometry::ula(m, 0.5).unwrap();
        let r = make_clustered_covariance(&geom, &[Cluster::from_degrees(20.0, 0.0, spread, 1.0)]).unwrap();
        let b = compact_eig(&r, rank_tol).unwrap();
        let err = b.covariance().sub(&r).frobenius_norm() / r.frobenius_norm();
        let bound = (rank_tol * (b.num_modes() as f64).sqrt()).max(1e-9);
        prop_assert!(err <= bound, "err {} bound {}", err, bound);
        let gram = b.vectors().adjoint() * b.vectors();
        prop_assert!((gram - CMatrix::identity(b.num_modes(), b.num_modes())).norm() < 1e-10);
    }
}
