//! Dense complex linear algebra on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid_input, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const LN_2: f64 = std::f64::consts::LN_2;

/// Square complex matrix equal to its conjugate transpose.
///
/// Construction checks the Hermitian property entry-wise and then stores the
/// exact Hermitian part, so downstream eigensolvers see a bit-symmetric input.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

/// Eigen-pairs of a Hermitian matrix sorted by descending eigenvalue.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, one per column, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermitianMatrix {
    /// Per-entry Hermitian tolerance, scaled by the largest entry magnitude when it exceeds one.
    pub const HERMITIAN_TOL: f64 = 1e-12;
    /// Relative PSD slack: smallest eigenvalue may reach `-PSD_TOL * lambda_max`.
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid_input(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid_input("matrix has non-finite entries"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let n = m.nrows();
        for i in 0..n {
            for j in i..n {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > Self::HERMITIAN_TOL * scale {
                    return Err(invalid_input(format!(
                        "matrix is not Hermitian: entry ({i},{j}) deviates by {dev:e}"
                    )));
                }
            }
        }
        Ok(Self::hermitian_part(&m))
    }

    /// `(m + m^H) / 2` without any check.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        let half = Complex64::new(0.5, 0.0);
        Self((m + m.adjoint()) * half)
    }

    /// `a a^H`.
    pub fn gram(a: &CMatrix) -> Self {
        Self::hermitian_part(&(a * a.adjoint()))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    /// `v diag(d) v^H`.
    pub fn from_eigen(vectors: &CMatrix, values: &[f64]) -> Self {
        let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
            vectors[(i, j)] * values[j]
        });
        Self::hermitian_part(&(scaled * vectors.adjoint()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(&self.0 * Complex64::new(a, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `b^H self b`.
    pub fn congruence(&self, b: &CMatrix) -> Self {
        Self::hermitian_part(&(b.adjoint() * &self.0 * b))
    }

    /// Real inner product `Re tr(self * other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn eigen(&self) -> HermitianEigen {
        let n = self.dim();
        if n == 0 {
            return HermitianEigen {
                values: Vec::new(),
                vectors: CMatrix::zeros(0, 0),
            };
        }
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        // Stable: ties keep the solver's order.
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        HermitianEigen { values, vectors }
    }

    pub fn is_psd(&self) -> bool {
        let vals = self.eigen().values;
        match (vals.first(), vals.last()) {
            (Some(&max), Some(&min)) => min >= -Self::PSD_TOL * max.abs().max(f64::MIN_POSITIVE),
            _ => true,
        }
    }

    /// `log2 det` of a Hermitian positive-definite matrix.
    ///
    /// Falls back to a `1e-12 * trace` diagonal jitter when the Cholesky
    /// factorization fails.
    pub fn log2_det(&self) -> Result<f64> {
        log2_det_hpd(&self.0)
    }
}

/// Frobenius norm of any complex matrix.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn log2_det_hpd(m: &CMatrix) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = Cholesky::new(m.clone()).or_else(|| {
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        let jitter = 1e-12 * tr.abs().max(f64::MIN_POSITIVE);
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += Complex64::new(jitter, 0.0);
        }
        Cholesky::new(j)
    });
    let chol = chol.ok_or_else(|| invalid_input("matrix is not positive definite"))?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / LN_2)
}

/// Inverse of a Hermitian positive-definite matrix, Hermitian-symmetrized.
pub fn inverse_hpd(m: &CMatrix) -> Result<CMatrix> {
    let inv = Cholesky::new(m.clone())
        .ok_or_else(|| invalid_input("matrix is not positive definite"))?
        .inverse();
    Ok(HermitianMatrix::hermitian_part(&inv).into_matrix())
}

/// Real diagonal matrix as a complex matrix.
pub fn real_diag(d: &[f64]) -> CMatrix {
    HermitianMatrix::from_real_diagonal(d).into_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 1.), c(0., 1.), c(1., 0.)]);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(crate::Error::InvalidInput(_))
        ));
        let rect = CMatrix::zeros(2, 3);
        assert!(HermitianMatrix::new(rect).is_err());
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 1.), c(0., -1.), c(1., 0.)]);
        let h = HermitianMatrix::new(m).unwrap();
        let e = h.eigen();
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!(e.values[1].abs() < 1e-12);
        let rebuilt = HermitianMatrix::from_eigen(&e.vectors, &e.values);
        assert!(rebuilt.sub(&h).frobenius_norm() < 1e-12);
    }

    #[test]
    fn log_det_matches_product_of_diagonal() {
        let h = HermitianMatrix::from_real_diagonal(&[2.0, 4.0]);
        assert!((h.log2_det().unwrap() - 3.0).abs() < 1e-14);
        // Singular matrix is rescued by jitter, giving a large negative value.
        let s = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert!(s.log2_det().unwrap() < -30.0);
    }

    #[test]
    fn psd_check() {
        assert!(HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).is_psd());
        assert!(!HermitianMatrix::from_real_diagonal(&[1.0, -0.1]).is_psd());
    }
}
