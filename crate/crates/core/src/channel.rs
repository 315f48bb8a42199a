//! Channel statistics: synthetic covariance generators, compact spatial-mode
//! bases, channel sampling and cross-user mode coherence.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::error::{invalid_input, invalid_param, Result};
use crate::linalg::{CMatrix, CVector, HermitianMatrix};
use crate::quadrature::gauss_legendre;
use crate::rng::complex_gaussian;

/// Relative eigenvalue threshold below which a mode is discarded.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Quadrature nodes per cluster in [`make_clustered_covariance`].
pub const CLUSTER_NODES: usize = 96;

/// Antenna element positions, in wavelengths.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid_param("array needs at least one element"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid_param("array element positions must be finite"));
        }
        Ok(Self { positions })
    }

    /// Uniform linear array along the y axis; azimuth 0 is broadside.
    pub fn ula(m: usize, spacing: f64) -> Result<Self> {
        Self::new((0..m).map(|i| [0.0, i as f64 * spacing, 0.0]).collect())
    }

    /// Planar array in the y–z plane: `horizontal` columns along y, `vertical` rows along z.
    pub fn upa(horizontal: usize, vertical: usize, spacing: f64) -> Result<Self> {
        let mut pos = Vec::with_capacity(horizontal * vertical);
        for v in 0..vertical {
            for h in 0..horizontal {
                pos.push([0.0, h as f64 * spacing, v as f64 * spacing]);
            }
        }
        Self::new(pos)
    }

    pub fn num_antennas(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    /// Unit-modulus steering vector toward (azimuth, elevation), radians.
    pub fn steering(&self, azimuth: f64, elevation: f64) -> CVector {
        let dir = [
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        ];
        CVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|p| {
                let phase = 2.0 * PI * (p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2]);
                Complex64::from_polar(1.0, phase)
            }),
        )
    }
}

/// A scattering cluster seen from the base station. Angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub azimuth: f64,
    pub elevation: f64,
    /// Standard deviation of the azimuth spread.
    pub angular_spread: f64,
    pub power: f64,
}

impl Cluster {
    pub fn from_degrees(azimuth: f64, elevation: f64, angular_spread: f64, power: f64) -> Self {
        Self {
            azimuth: azimuth.to_radians(),
            elevation: elevation.to_radians(),
            angular_spread: angular_spread.to_radians(),
            power,
        }
    }
}

/// Exponential correlation model, `R[i][j] = rho^(j-i)` for `i <= j`.
pub fn make_exp_correlation(m: usize, rho: Complex64) -> Result<HermitianMatrix> {
    if m == 0 {
        return Err(invalid_param("antenna count must be at least 1"));
    }
    if !(rho.norm() < 1.0) {
        return Err(invalid_param(format!("|rho| = {} must be < 1", rho.norm())));
    }
    let r = CMatrix::from_fn(m, m, |i, j| {
        if i <= j {
            rho.powu((j - i) as u32)
        } else {
            rho.powu((i - j) as u32).conj()
        }
    });
    Ok(HermitianMatrix::hermitian_part(&r))
}

/// Clustered angular-spread covariance, normalized to `tr R = M`.
///
/// Each cluster contributes `power * E[a(theta) a(theta)^H]` with the azimuth
/// drawn from a wrapped Gaussian around the cluster center, truncated at four
/// standard deviations. The expectation uses [`CLUSTER_NODES`]-point
/// Gauss–Legendre quadrature.
pub fn make_clustered_covariance(geom: &ArrayGeometry, clusters: &[Cluster]) -> Result<HermitianMatrix> {
    if clusters.is_empty() {
        return Err(invalid_param("cluster list is empty"));
    }
    for (i, c) in clusters.iter().enumerate() {
        if !(c.power > 0.0 && c.power.is_finite()) {
            return Err(invalid_param(format!("cluster {i}: power must be > 0")));
        }
        if !(c.angular_spread > 0.0 && c.angular_spread.is_finite()) {
            return Err(invalid_param(format!("cluster {i}: angular spread must be > 0")));
        }
        if !(c.azimuth.is_finite() && c.elevation.is_finite()) {
            return Err(invalid_param(format!("cluster {i}: angles must be finite")));
        }
    }
    let m = geom.num_antennas();
    let (nodes, weights) = gauss_legendre(CLUSTER_NODES);
    let mut r = CMatrix::zeros(m, m);
    for c in clusters {
        let sigma = c.angular_spread;
        let half = (4.0 * sigma).min(PI);
        let density = |x: f64| -> f64 {
            (-3..=3)
                .map(|n| {
                    let u = (x + 2.0 * PI * n as f64) / sigma;
                    (-0.5 * u * u).exp()
                })
                .sum()
        };
        let w: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * density(half * x))
            .collect();
        let total: f64 = w.iter().sum();
        for (x, wi) in nodes.iter().zip(&w) {
            let a = geom.steering(c.azimuth + half * x, c.elevation);
            let coef = Complex64::new(c.power * wi / total, 0.0);
            r += (&a * a.adjoint()) * coef;
        }
    }
    let h = HermitianMatrix::hermitian_part(&r);
    let tr = h.trace();
    Ok(h.scale(m as f64 / tr))
}

/// Orthonormal spatial modes `Q` (M x S) with strictly positive, descending gains.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialModeBasis {
    q: CMatrix,
    lambda: Vec<f64>,
}

impl SpatialModeBasis {
    pub const ORTHONORMAL_TOL: f64 = 1e-10;

    pub fn new(q: CMatrix, lambda: Vec<f64>) -> Result<Self> {
        if q.ncols() != lambda.len() {
            return Err(invalid_input(format!(
                "{} mode vectors but {} gains",
                q.ncols(),
                lambda.len()
            )));
        }
        if q.nrows() == 0 {
            return Err(invalid_input("basis needs at least one antenna"));
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(invalid_input("mode gains must be strictly positive"));
        }
        if lambda.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid_input("mode gains must be sorted non-increasing"));
        }
        let gram = q.adjoint() * &q;
        let s = lambda.len();
        for i in 0..s {
            for j in 0..s {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - Complex64::new(target, 0.0)).norm() > Self::ORTHONORMAL_TOL {
                    return Err(invalid_input("mode vectors are not orthonormal"));
                }
            }
        }
        Ok(Self { q, lambda })
    }

    /// Basis with no modes: a zero-power channel.
    pub fn empty(m: usize) -> Self {
        Self {
            q: CMatrix::zeros(m, 0),
            lambda: Vec::new(),
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.q.nrows()
    }

    pub fn num_modes(&self) -> usize {
        self.lambda.len()
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.q
    }

    pub fn gains(&self) -> &[f64] {
        &self.lambda
    }

    /// `Q diag(lambda) Q^H`.
    pub fn covariance(&self) -> HermitianMatrix {
        HermitianMatrix::from_eigen(&self.q, &self.lambda)
    }

    /// The `n` strongest modes.
    pub fn strongest(&self, n: usize) -> Self {
        let n = n.min(self.num_modes());
        Self {
            q: self.q.columns(0, n).into_owned(),
            lambda: self.lambda[..n].to_vec(),
        }
    }
}

/// Compact eigendecomposition keeping modes with `lambda >= rank_tol * lambda_max`.
///
/// Modes are sorted by descending gain; each eigenvector is rotated so its
/// first non-negligible component is real positive.
pub fn compact_eig(r: &HermitianMatrix, rank_tol: f64) -> Result<SpatialModeBasis> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(invalid_param(format!("rank_tol = {rank_tol} must lie in (0, 1)")));
    }
    let m = r.dim();
    if m == 0 {
        return Err(invalid_input("empty covariance"));
    }
    let eig = r.eigen();
    let lmax = eig.values[0];
    if lmax <= 0.0 {
        return Ok(SpatialModeBasis::empty(m));
    }
    if eig.values[m - 1] < -HermitianMatrix::PSD_TOL * lmax {
        return Err(invalid_input(format!(
            "covariance is not PSD: eigenvalue {:e} with max {:e}",
            eig.values[m - 1],
            lmax
        )));
    }
    let keep = eig.values.iter().take_while(|&&l| l >= rank_tol * lmax).count();
    let mut q = eig.vectors.columns(0, keep).into_owned();
    for mut col in q.column_iter_mut() {
        let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(z) = col.iter().find(|z| z.norm() > 1e-8 * peak).copied() {
            let phase = z.conj() / z.norm();
            col *= phase;
        }
    }
    SpatialModeBasis::new(q, eig.values[..keep].to_vec())
}

/// Draw `h = Q diag(sqrt(lambda)) g` with `g ~ CN(0, I)`.
pub fn sample_channel<R: Rng + ?Sized>(modes: &SpatialModeBasis, rng: &mut R) -> CVector {
    let g = CVector::from_iterator(
        modes.num_modes(),
        modes.gains().iter().map(|l| complex_gaussian(rng) * l.sqrt()),
    );
    modes.vectors() * g
}

/// Statistics the base station holds for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserStatistics {
    pub modes: SpatialModeBasis,
    /// Linear uplink SNR `p_UL / sigma_UL^2`.
    pub uplink_snr: f64,
}

impl UserStatistics {
    pub fn new(modes: SpatialModeBasis, uplink_snr: f64) -> Result<Self> {
        if !(uplink_snr > 0.0 && uplink_snr.is_finite()) {
            return Err(invalid_param(format!("uplink SNR {uplink_snr} must be > 0")));
        }
        Ok(Self { modes, uplink_snr })
    }
}

/// Largest `|q_{s,k}^H q_{s',k'}|` over distinct users `k != k'`.
pub fn cross_user_coherence(bases: &[SpatialModeBasis]) -> Result<f64> {
    if bases.len() < 2 {
        return Err(invalid_param("coherence needs at least two users"));
    }
    let m = bases[0].num_antennas();
    if bases.iter().any(|b| b.num_antennas() != m) {
        return Err(invalid_input("bases have different antenna counts"));
    }
    let mut worst: f64 = 0.0;
    for (k, a) in bases.iter().enumerate() {
        for b in &bases[k + 1..] {
            let cross = a.vectors().adjoint() * b.vectors();
            worst = cross.iter().map(|z| z.norm()).fold(worst, f64::max);
        }
    }
    Ok(worst.min(1.0))
}
