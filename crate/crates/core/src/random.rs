//! Random problem instances for tests, oracles and benchmarks.

use rand::Rng;

use crate::channel::{SpatialModeBasis, UserStatistics};
use crate::linalg::{CMatrix, HermitianMatrix};
use crate::rng::complex_gaussian;

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// `m x s` matrix with orthonormal columns, Haar-distributed up to column phases.
pub fn orthonormal_columns<R: Rng + ?Sized>(m: usize, s: usize, rng: &mut R) -> CMatrix {
    assert!(s <= m, "cannot fit {s} orthonormal columns in dimension {m}");
    let qr = gaussian_matrix(m, s, rng).qr();
    qr.q().columns(0, s).into_owned()
}

/// Random PSD matrix of the given rank, scaled to `trace`.
pub fn psd_with_trace<R: Rng + ?Sized>(n: usize, rank: usize, trace: f64, rng: &mut R) -> HermitianMatrix {
    let c = HermitianMatrix::gram(&gaussian_matrix(n, rank, rng));
    let tr = c.trace();
    if tr > 0.0 {
        c.scale(trace / tr)
    } else {
        c
    }
}

pub fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Random basis with `s` modes and gains log-uniform in `[lo, hi]`, sorted descending.
pub fn basis<R: Rng + ?Sized>(m: usize, s: usize, lo: f64, hi: f64, rng: &mut R) -> SpatialModeBasis {
    let mut gains: Vec<f64> = (0..s).map(|_| log_uniform(lo, hi, rng)).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    SpatialModeBasis::new(orthonormal_columns(m, s, rng), gains)
        .expect("random basis satisfies the invariants")
}

pub fn user<R: Rng + ?Sized>(
    m: usize,
    s: usize,
    gain_range: (f64, f64),
    ul_snr: f64,
    rng: &mut R,
) -> UserStatistics {
    UserStatistics::new(basis(m, s, gain_range.0, gain_range.1, rng), ul_snr).expect("positive uplink SNR")
}
