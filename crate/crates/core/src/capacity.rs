//! Per-user secret-key capacity of a downlink training sequence.
//!
//! Three analytic routes are provided and must agree:
//! - [`capacity_determinant`]: mutual information of the joint covariance of the
//!   mode-projected uplink observation and the downlink observation, through a
//!   Schur complement in the T-dimensional pilot space;
//! - [`capacity_woodbury`]: the same quantity rewritten in the S-dimensional
//!   mode space after the matrix inversion lemma;
//! - [`capacity_parallel`]: the closed form over independent parallel modes,
//!   exact when the training covariance is diagonal in the user's modes.
//!
//! [`capacity_monte_carlo`] estimates the same quantity from simulated
//! observations. Everything is in bits, with the uplink noise variance
//! normalized to one.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::UserStatistics;
use crate::error::{invalid_input, invalid_param, Result};
use crate::linalg::{inverse_hpd, log2_det_hpd, real_diag, CMatrix, CVector, HermitianMatrix};
use crate::matrix_io;
use crate::rng::complex_gaussian;

/// Downlink pilot matrix `S_DL` (M antennas x T pilots).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSequence {
    pilots: CMatrix,
}

impl TrainingSequence {
    pub fn new(pilots: CMatrix) -> Result<Self> {
        if pilots.nrows() == 0 {
            return Err(invalid_input("training sequence needs at least one antenna"));
        }
        if pilots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid_input("training sequence has non-finite entries"));
        }
        Ok(Self { pilots })
    }

    /// Like [`TrainingSequence::new`], additionally checking `tr(S S^H) <= budget + 1e-9`.
    pub fn with_budget(pilots: CMatrix, budget: f64) -> Result<Self> {
        let seq = Self::new(pilots)?;
        let energy = seq.energy();
        if energy > budget + 1e-9 {
            return Err(invalid_input(format!(
                "training energy {energy} exceeds budget {budget}"
            )));
        }
        Ok(seq)
    }

    /// No pilots at all (T = 0).
    pub fn empty(m: usize) -> Self {
        Self {
            pilots: CMatrix::zeros(m, 0),
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.pilots.nrows()
    }

    pub fn num_pilots(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.pilots
    }

    /// Training covariance `C_DL = S S^H`.
    pub fn covariance(&self) -> HermitianMatrix {
        HermitianMatrix::gram(&self.pilots)
    }

    /// `tr(S S^H)`, the total training energy.
    pub fn energy(&self) -> f64 {
        self.pilots.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_text(&self) -> String {
        matrix_io::dump_matrix(&self.pilots)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(matrix_io::load_matrix(text)?)
    }
}

/// Capacities of all users under one design.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityReport {
    pub per_user: Vec<f64>,
    pub average: f64,
    pub sum: f64,
    pub criterion_value: f64,
}

impl CapacityReport {
    /// Negative round-off in `per_user` is clamped to zero.
    pub fn new(per_user: Vec<f64>, criterion_value: f64) -> Result<Self> {
        let per_user: Vec<f64> = per_user.into_iter().map(|c| c.max(0.0)).collect();
        let average = average_capacity(&per_user)?;
        let sum = per_user.iter().sum();
        Ok(Self {
            per_user,
            average,
            sum,
            criterion_value,
        })
    }
}

fn check_noise(dl_noise_var: f64) -> Result<()> {
    if !(dl_noise_var > 0.0 && dl_noise_var.is_finite()) {
        return Err(invalid_param(format!(
            "DL noise variance {dl_noise_var} must be > 0"
        )));
    }
    Ok(())
}

fn check_dims(user: &UserStatistics, m: usize) -> Result<()> {
    if user.modes.num_antennas() != m {
        return Err(invalid_input(format!(
            "user has {} antennas, training uses {m}",
            user.modes.num_antennas()
        )));
    }
    Ok(())
}

/// `I(z_UL; z_DL)` from the joint covariance, via the conditional Schur complement.
pub fn capacity_determinant(user: &UserStatistics, seq: &TrainingSequence, dl_noise_var: f64) -> Result<f64> {
    check_noise(dl_noise_var)?;
    check_dims(user, seq.num_antennas())?;
    let s = user.modes.num_modes();
    let t = seq.num_pilots();
    if s == 0 || t == 0 {
        return Ok(0.0);
    }
    let rho = user.uplink_snr;
    let lambda = user.modes.gains();
    let lam = real_diag(lambda);
    // Pilot-space view of the modes, D = S^H Q (T x S).
    let d = seq.matrix().adjoint() * user.modes.vectors();
    let c_ul = real_diag(&lambda.iter().map(|l| rho * l + 1.0).collect::<Vec<_>>());
    let mut c_dl = &d * &lam * d.adjoint();
    for i in 0..t {
        c_dl[(i, i)] += Complex64::new(dl_noise_var, 0.0);
    }
    let c_dl = HermitianMatrix::hermitian_part(&c_dl).into_matrix();
    let cross = &lam * d.adjoint() * Complex64::new(rho.sqrt(), 0.0);
    let schur = &c_ul - &cross * inverse_hpd(&c_dl)? * cross.adjoint();
    let schur = HermitianMatrix::hermitian_part(&schur).into_matrix();
    Ok((log2_det_hpd(&c_ul)? - log2_det_hpd(&schur)?).max(0.0))
}

/// Woodbury-form capacity for a sequence.
pub fn capacity_woodbury(user: &UserStatistics, seq: &TrainingSequence, dl_noise_var: f64) -> Result<f64> {
    capacity_woodbury_cov(user, &seq.covariance(), dl_noise_var)
}

/// Woodbury-form capacity for a training covariance `C_DL` (M x M, PSD).
pub fn capacity_woodbury_cov(
    user: &UserStatistics,
    c_dl: &HermitianMatrix,
    dl_noise_var: f64,
) -> Result<f64> {
    check_noise(dl_noise_var)?;
    check_dims(user, c_dl.dim())?;
    if !c_dl.is_psd() {
        return Err(invalid_input("training covariance is not PSD"));
    }
    let projected = c_dl.congruence(user.modes.vectors());
    capacity_mode_space(user.modes.gains(), user.uplink_snr, &projected, dl_noise_var)
}

/// `log2|Lambda + I/rho| - log2|I/rho + (Lambda^-1 + Q^H C Q / sigma^2)^-1|`,
/// given the mode-space training Gram `Q^H C_DL Q`.
pub fn capacity_mode_space(
    lambda: &[f64],
    ul_snr: f64,
    projected: &HermitianMatrix,
    dl_noise_var: f64,
) -> Result<f64> {
    let s = lambda.len();
    if projected.dim() != s {
        return Err(invalid_input("projected covariance does not match mode count"));
    }
    if s == 0 {
        return Ok(0.0);
    }
    let inv_rho = 1.0 / ul_snr;
    let head: f64 = lambda.iter().map(|l| (l + inv_rho).log2()).sum();
    let a = real_diag(&lambda.iter().map(|l| 1.0 / l).collect::<Vec<_>>())
        + projected.as_matrix() * Complex64::new(1.0 / dl_noise_var, 0.0);
    let mut tail = inverse_hpd(&HermitianMatrix::hermitian_part(&a).into_matrix())?;
    for i in 0..s {
        tail[(i, i)] += Complex64::new(inv_rho, 0.0);
    }
    Ok((head - log2_det_hpd(&tail)?).max(0.0))
}

/// Closed form over parallel modes:
/// `sum_s log2(1 + lambda_s^2 rho rho_s / (lambda_s (rho + rho_s) + 1))`.
pub fn capacity_parallel(lambda: &[f64], ul_snr: f64, dl_mode_snr: &[f64]) -> Result<f64> {
    if lambda.len() != dl_mode_snr.len() {
        return Err(invalid_param(format!(
            "{} gains but {} downlink SNRs",
            lambda.len(),
            dl_mode_snr.len()
        )));
    }
    if !(ul_snr >= 0.0) || dl_mode_snr.iter().any(|x| !(*x >= 0.0)) {
        return Err(invalid_param("SNRs must be non-negative"));
    }
    if lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid_param("mode gains must be non-negative"));
    }
    Ok(lambda
        .iter()
        .zip(dl_mode_snr)
        .map(|(&l, &x)| mode_capacity(l, ul_snr, x))
        .sum())
}

/// One parallel-mode term of [`capacity_parallel`], in bits.
pub fn mode_capacity(lambda: f64, ul_snr: f64, dl_snr: f64) -> f64 {
    let num = lambda * lambda * ul_snr * dl_snr;
    if num == 0.0 {
        return 0.0;
    }
    (num / (lambda * (ul_snr + dl_snr) + 1.0)).ln_1p() / std::f64::consts::LN_2
}

/// Monte Carlo estimate with its jackknife standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

pub const MIN_MC_SAMPLES: usize = 10_000;
const JACKKNIFE_BLOCKS: usize = 100;

/// Plug-in Gaussian mutual information from simulated observation pairs.
///
/// Draws `(g, w_UL, w_DL)`, forms the mode-projected uplink and the downlink
/// observations, and applies the log-det identity to their empirical
/// (zero-mean) covariances. The standard error is a delete-one-block
/// jackknife over 100 blocks.
pub fn capacity_monte_carlo<R: Rng + ?Sized>(
    user: &UserStatistics,
    seq: &TrainingSequence,
    dl_noise_var: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_noise(dl_noise_var)?;
    check_dims(user, seq.num_antennas())?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(invalid_param(format!(
            "n_samples = {n_samples} is below the minimum {MIN_MC_SAMPLES}"
        )));
    }
    let s = user.modes.num_modes();
    let t = seq.num_pilots();
    if s == 0 || t == 0 {
        return Ok(McEstimate {
            estimate: 0.0,
            stderr: 0.0,
        });
    }
    let dim = s + t;
    let sqrt_rho = user.uplink_snr.sqrt();
    let sqrt_lam: Vec<f64> = user.modes.gains().iter().map(|l| l.sqrt()).collect();
    let d = seq.matrix().adjoint() * user.modes.vectors();
    let sigma = dl_noise_var.sqrt();

    let mut blocks = vec![CMatrix::zeros(dim, dim); JACKKNIFE_BLOCKS];
    let mut sizes = vec![0usize; JACKKNIFE_BLOCKS];
    let mut x = CVector::zeros(dim);
    for i in 0..n_samples {
        let b = i * JACKKNIFE_BLOCKS / n_samples;
        let g = CVector::from_iterator(s, sqrt_lam.iter().map(|sl| complex_gaussian(rng) * *sl));
        for j in 0..s {
            x[j] = g[j] * sqrt_rho + complex_gaussian(rng);
        }
        let z_dl = &d * &g;
        for j in 0..t {
            x[s + j] = z_dl[j] + complex_gaussian(rng) * sigma;
        }
        blocks[b].ger(
            Complex64::new(1.0, 0.0),
            &x,
            &x.conjugate(),
            Complex64::new(1.0, 0.0),
        );
        sizes[b] += 1;
    }
    let total: CMatrix = blocks.iter().fold(CMatrix::zeros(dim, dim), |acc, b| acc + b);
    let mi = |sum: &CMatrix, count: usize| -> Result<f64> {
        let c = sum / Complex64::new(count as f64, 0.0);
        let c = HermitianMatrix::hermitian_part(&c).into_matrix();
        let uu = c.view((0, 0), (s, s)).into_owned();
        let dd = c.view((s, s), (t, t)).into_owned();
        Ok(log2_det_hpd(&uu)? + log2_det_hpd(&dd)? - log2_det_hpd(&c)?)
    };
    let estimate = mi(&total, n_samples)?;
    let leave_out = blocks
        .iter()
        .zip(&sizes)
        .map(|(b, &n)| mi(&(&total - b), n_samples - n))
        .collect::<Result<Vec<f64>>>()?;
    let g = JACKKNIFE_BLOCKS as f64;
    let mean = leave_out.iter().sum::<f64>() / g;
    let var = (g - 1.0) / g * leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok(McEstimate {
        estimate,
        stderr: var.sqrt(),
    })
}

/// Arithmetic mean of per-user capacities.
pub fn average_capacity(per_user: &[f64]) -> Result<f64> {
    if per_user.is_empty() {
        return Err(invalid_param("no users to average"));
    }
    Ok(per_user.iter().sum::<f64>() / per_user.len() as f64)
}
