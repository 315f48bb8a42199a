//! Numerical maximization of multi-user criteria over the training covariance.
//!
//! Any power outside the joint span of all users' modes is invisible to every
//! user, so the search runs over a reduced Hermitian variable `Y` with
//! `C_DL = Q~ Y Q~^H`, where `Q~` is an orthonormal basis of that span. Each
//! `C_k` is concave in `C_DL`, so projected-gradient ascent on the set
//! `{Y >= 0, tr Y <= p_DL}` reaches the global optimum.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::capacity::{mode_capacity, TrainingSequence};
use crate::channel::{SpatialModeBasis, UserStatistics};
use crate::designer::{water_fill, DesignRequest};
use crate::error::{invalid_input, invalid_param, Result};
use crate::linalg::{inverse_hpd, log2_det_hpd, real_diag, CMatrix, HermitianMatrix};

/// Relative tolerance of the rank-revealing orthogonalization.
pub const SPAN_TOL: f64 = 1e-10;

/// Orthonormal basis `Q~` of `span[Q_1 ... Q_K]` and each user's coordinates in it.
#[derive(Clone, Debug)]
pub struct SubspaceReduction {
    basis: CMatrix,
    /// `Q~^H Q_k` per user.
    maps: Vec<CMatrix>,
}

impl SubspaceReduction {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_antennas(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn user_map(&self, k: usize) -> &CMatrix {
        &self.maps[k]
    }

    pub fn num_users(&self) -> usize {
        self.maps.len()
    }

    /// `Q~ Y Q~^H`.
    pub fn expand(&self, y: &HermitianMatrix) -> HermitianMatrix {
        y.congruence(&self.basis.adjoint())
    }

    /// `Q~^H C Q~`.
    pub fn project(&self, c: &HermitianMatrix) -> HermitianMatrix {
        c.congruence(&self.basis)
    }
}

/// Two-pass Gram–Schmidt over the stacked mode vectors; a column is dropped
/// when its residual falls below [`SPAN_TOL`] of its norm.
pub fn reduce_subspace(bases: &[SpatialModeBasis]) -> Result<SubspaceReduction> {
    if bases.is_empty() {
        return Err(invalid_param("no users to reduce"));
    }
    let m = bases[0].num_antennas();
    if bases.iter().any(|b| b.num_antennas() != m) {
        return Err(invalid_input("bases have different antenna counts"));
    }
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for b in bases {
        for v in b.vectors().column_iter() {
            let norm = v.norm();
            let mut w = v.into_owned();
            for _ in 0..2 {
                for q in &cols {
                    let coef = q.dotc(&w);
                    w -= q * coef;
                }
            }
            let rn = w.norm();
            if rn > SPAN_TOL * norm {
                cols.push(w / Complex64::new(rn, 0.0));
            }
        }
    }
    let basis = if cols.is_empty() {
        CMatrix::zeros(m, 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    let maps = bases.iter().map(|b| basis.adjoint() * b.vectors()).collect();
    Ok(SubspaceReduction { basis, maps })
}

/// Per-user quantities at one `Y`: capacity, gradient, and the two inverses
/// the Hessian needs.
///
/// With `A = Lambda^-1 + B^H Y B / sigma^2` and `B = Q~^H Q_k`,
/// `C = const + log2|A| - log2|rho I + A|`, so
/// `grad = B (A^-1 - (rho I + A)^-1) B^H / (sigma^2 ln 2)` and the Hessian
/// applied to `D` is `B (M dA M - A^-1 dA A^-1) B^H / (sigma^2 ln 2)` with
/// `M = (rho I + A)^-1` and `dA = B^H D B / sigma^2`.
struct UserLocal {
    value: f64,
    grad: HermitianMatrix,
    a_inv: CMatrix,
    m_inv: CMatrix,
}

fn user_local(
    user: &UserStatistics,
    map: &CMatrix,
    y: &HermitianMatrix,
    noise_var: f64,
) -> Result<UserLocal> {
    let lambda = user.modes.gains();
    let s = lambda.len();
    if s == 0 {
        return Ok(UserLocal {
            value: 0.0,
            grad: HermitianMatrix::zeros(y.dim()),
            a_inv: CMatrix::zeros(0, 0),
            m_inv: CMatrix::zeros(0, 0),
        });
    }
    let rho = user.uplink_snr;
    let proj = y.congruence(map);
    let a = real_diag(&lambda.iter().map(|l| 1.0 / l).collect::<Vec<_>>())
        + proj.as_matrix() * Complex64::new(1.0 / noise_var, 0.0);
    let a_inv = inverse_hpd(&a)?;
    let mut shifted = a.clone();
    let mut tail = a_inv.clone();
    for i in 0..s {
        shifted[(i, i)] += Complex64::new(rho, 0.0);
        tail[(i, i)] += Complex64::new(1.0 / rho, 0.0);
    }
    let head: f64 = lambda.iter().map(|l| (l + 1.0 / rho).log2()).sum();
    let value = head - log2_det_hpd(&tail)?;
    let m_inv = inverse_hpd(&shifted)?;
    let inner = &a_inv - &m_inv;
    let scale = Complex64::new(1.0 / (noise_var * std::f64::consts::LN_2), 0.0);
    let grad = HermitianMatrix::hermitian_part(&(map * inner * map.adjoint() * scale));
    Ok(UserLocal {
        value,
        grad,
        a_inv,
        m_inv,
    })
}

fn value_and_gradient(
    user: &UserStatistics,
    map: &CMatrix,
    y: &HermitianMatrix,
    noise_var: f64,
) -> Result<(f64, HermitianMatrix)> {
    let l = user_local(user, map, y, noise_var)?;
    Ok((l.value, l.grad))
}

/// Gradient of user capacity (bits per unit power) with respect to the reduced covariance.
pub fn capacity_gradient(
    user: &UserStatistics,
    y: &HermitianMatrix,
    noise_var: f64,
    map: &CMatrix,
) -> Result<HermitianMatrix> {
    check_map(user, y, map)?;
    Ok(value_and_gradient(user, map, y, noise_var)?.1)
}

/// User capacity at a reduced covariance.
pub fn reduced_capacity(
    user: &UserStatistics,
    y: &HermitianMatrix,
    noise_var: f64,
    map: &CMatrix,
) -> Result<f64> {
    check_map(user, y, map)?;
    Ok(value_and_gradient(user, map, y, noise_var)?.0.max(0.0))
}

fn check_map(user: &UserStatistics, y: &HermitianMatrix, map: &CMatrix) -> Result<()> {
    if map.nrows() != y.dim() || map.ncols() != user.modes.num_modes() {
        return Err(invalid_input(format!(
            "map is {}x{}, expected {}x{}",
            map.nrows(),
            map.ncols(),
            y.dim(),
            user.modes.num_modes()
        )));
    }
    Ok(())
}

/// Euclidean projection onto `{Y >= 0, tr Y <= budget}`.
///
/// Both constraints only see the spectrum, so the projection clips the
/// eigenvalues at zero and, when the clipped trace exceeds the budget,
/// projects them onto the simplex of that sum.
pub fn project_trace_psd(x: &HermitianMatrix, budget: f64) -> HermitianMatrix {
    let eig = x.eigen();
    let n = eig.values.len();
    if n == 0 {
        return x.clone();
    }
    if eig.values[n - 1] >= 0.0 && eig.values.iter().sum::<f64>() <= budget {
        return x.clone();
    }
    let clipped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let values = if clipped.iter().sum::<f64>() <= budget {
        clipped
    } else {
        // values are sorted descending already
        let mut cum = 0.0;
        let mut shift = 0.0;
        for (j, v) in eig.values.iter().enumerate() {
            cum += v;
            let candidate = (cum - budget) / (j + 1) as f64;
            if v - candidate > 0.0 {
                shift = candidate;
            }
        }
        eig.values.iter().map(|v| (v - shift).max(0.0)).collect()
    };
    HermitianMatrix::from_eigen(&eig.vectors, &values)
}

/// How the trial step of each line search is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// Every line search starts from `initial` and backtracks by `factor`.
    Armijo { initial: f64, factor: f64 },
    /// Barzilai–Borwein trial step from the last move, then Armijo backtracking by `factor`.
    BarzilaiBorwein { initial: f64, factor: f64 },
}

#[derive(Clone, Debug)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop when the projected-gradient norm is at most `tol * (1 + |objective|)`.
    pub tol: f64,
    pub step_rule: StepRule,
    /// Starting point in reduced coordinates; uniform `p_DL / S~ * I` when absent.
    pub initial: Option<HermitianMatrix>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-8,
            step_rule: StepRule::BarzilaiBorwein {
                initial: 1.0,
                factor: 0.5,
            },
            initial: None,
        }
    }
}

/// Smoothing temperatures (bits) for max-min criteria.
pub const ANNEAL_SCHEDULE: [f64; 4] = [1.0, 1e-1, 1e-2, 1e-3];
/// Extra temperatures tried after annealing; kept only if the exact minimum improves.
pub const POLISH_SCHEDULE: [f64; 3] = [1e-4, 1e-5, 1e-6];
const ARMIJO_C: f64 = 1e-4;
const ASCENT_SLACK: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct OptimizerResult {
    /// Optimal `Y` in reduced coordinates.
    pub covariance: HermitianMatrix,
    pub iterations: usize,
    /// Exact criterion at the returned point: `sum_k beta_k C_k` or `min_k C_k / beta_k`.
    pub criterion_value: f64,
    pub per_user: Vec<f64>,
    pub converged: bool,
    /// `||Y - P(Y + grad)||_F / (1 + ||Y||_F)`.
    pub kkt_residual: f64,
    /// Objective after each accepted step, one list per smoothing stage.
    pub trace: Vec<Vec<f64>>,
}

impl OptimizerResult {
    pub fn full_covariance(&self, reduction: &SubspaceReduction) -> HermitianMatrix {
        reduction.expand(&self.covariance)
    }
}

struct Problem<'a> {
    req: &'a DesignRequest,
    red: &'a SubspaceReduction,
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn users(&self, y: &HermitianMatrix) -> Result<Vec<(f64, HermitianMatrix)>> {
        self.req
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| value_and_gradient(u, self.red.user_map(k), y, self.req.dl_noise_var))
            .collect()
    }

    /// Smoothed (or plain sum) objective and its gradient.
    fn objective(&self, y: &HermitianMatrix, tau: Option<f64>) -> Result<(f64, HermitianMatrix)> {
        let parts = self.users(y)?;
        let mut grad = HermitianMatrix::zeros(y.dim());
        match tau {
            None => {
                let mut f = 0.0;
                for ((c, g), b) in parts.iter().zip(&self.weights) {
                    f += b * c;
                    grad = grad.add(&g.scale(*b));
                }
                Ok((f, grad))
            }
            Some(tau) => {
                let scaled: Vec<f64> = parts.iter().zip(&self.weights).map(|((c, _), b)| c / b).collect();
                let low = scaled.iter().copied().fold(f64::INFINITY, f64::min);
                let e: Vec<f64> = scaled.iter().map(|v| (-(v - low) / tau).exp()).collect();
                let z: f64 = e.iter().sum();
                let f = low - tau * z.ln();
                for (((_, g), b), ei) in parts.iter().zip(&self.weights).zip(&e) {
                    grad = grad.add(&g.scale(ei / z / b));
                }
                Ok((f, grad))
            }
        }
    }

    fn exact(&self, y: &HermitianMatrix) -> Result<(f64, Vec<f64>)> {
        let per_user: Vec<f64> = self.users(y)?.into_iter().map(|(c, _)| c.max(0.0)).collect();
        let value = if self.req.criterion.is_min() {
            per_user
                .iter()
                .zip(&self.weights)
                .map(|(c, b)| c / b)
                .fold(f64::INFINITY, f64::min)
        } else {
            per_user.iter().zip(&self.weights).map(|(c, b)| b * c).sum()
        };
        Ok((value, per_user))
    }

    fn projected_gradient_norm(&self, y: &HermitianMatrix, g: &HermitianMatrix) -> f64 {
        y.sub(&project_trace_psd(&y.add(g), self.req.dl_budget))
            .frobenius_norm()
    }
}

/// Eigenvalues above `FACE_TOL * lambda_max` span the face of the PSD cone
/// the Newton step works on.
const FACE_TOL: f64 = 1e-9;

/// Newton is skipped above this many face coordinates; the dense KKT solve
/// would cost more than the gradient iterations it replaces.
const NEWTON_MAX_VARS: usize = 600;

/// Smallest accepted Newton step length that still counts as a full step.
const NEWTON_FULL_STEP: f64 = 0.25;

/// Real coordinates for the Hermitian matrices whose entries vanish outside
/// the first `r` rows and columns: `e_ii` (i < r), then
/// `(e_ij + e_ji)/sqrt2` and `i (e_ij - e_ji)/sqrt2` for i < r, i < j.
/// The basis is orthonormal for `<X, Y> = Re tr(X Y)`.
struct FaceCoords {
    n: usize,
    r: usize,
    pairs: Vec<(usize, usize)>,
}

impl FaceCoords {
    fn new(n: usize, r: usize) -> Self {
        let pairs = (0..r).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self { n, r, pairs }
    }

    fn len(&self) -> usize {
        self.r + 2 * self.pairs.len()
    }

    /// Reads only the first `r` rows, so `x` may be `r x n`.
    fn coords(&self, x: &CMatrix) -> DVector<f64> {
        let mut c = Vec::with_capacity(self.len());
        c.extend((0..self.r).map(|i| x[(i, i)].re));
        for &(i, j) in &self.pairs {
            c.push(std::f64::consts::SQRT_2 * x[(i, j)].re);
            c.push(std::f64::consts::SQRT_2 * x[(i, j)].im);
        }
        DVector::from_vec(c)
    }

    /// Nonzero entries of basis element `q`.
    fn unit(&self, q: usize) -> Vec<(usize, usize, Complex64)> {
        if q < self.r {
            return vec![(q, q, Complex64::new(1.0, 0.0))];
        }
        let (i, j) = self.pairs[(q - self.r) / 2];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = if (q - self.r) % 2 == 0 {
            Complex64::new(h, 0.0)
        } else {
            Complex64::new(0.0, h)
        };
        vec![(i, j, v), (j, i, v.conj())]
    }

    fn matrix(&self, c: &[f64]) -> CMatrix {
        let mut x = CMatrix::zeros(self.n, self.n);
        for i in 0..self.r {
            x[(i, i)] = Complex64::new(c[i], 0.0);
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let v = Complex64::new(c[self.r + 2 * p], c[self.r + 2 * p + 1]) / std::f64::consts::SQRT_2;
            x[(i, j)] = v;
            x[(j, i)] = v.conj();
        }
        x
    }
}

impl Problem<'_> {
    /// Newton step on the manifold of PSD matrices with the rank of the
    /// current iterate, restricted to the trace level set when the budget is
    /// spent. In the eigenbasis `U = [V W]` of `Y` (V: the `r` leading
    /// directions) the step moves the `VV` and `VW` blocks; the curvature of
    /// the manifold enters through `Re tr((G_WW - nu I) E_WV X^-1 E_VW)`.
    fn manifold_newton(
        &self,
        y: &HermitianMatrix,
        f: f64,
        g_full: &HermitianMatrix,
        tau: Option<f64>,
    ) -> Result<Option<NewtonStep>> {
        let n = y.dim();
        let eig = y.eigen();
        let vmax = eig.values.first().copied().unwrap_or(0.0);
        if vmax <= 0.0 {
            return Ok(None);
        }
        let r = eig.values.iter().take_while(|&&v| v > FACE_TOL * vmax).count();
        let u = &eig.vectors;
        let fc = FaceCoords::new(n, r);
        let np = fc.len();
        if np > NEWTON_MAX_VARS {
            return Ok(None);
        }
        let noise = self.req.dl_noise_var;
        let units: Vec<_> = (0..np).map(|q| fc.unit(q)).collect();

        let mut values = Vec::new();
        let mut grads = Vec::new();
        let mut hessians = Vec::new();
        for (k, user) in self.req.users.iter().enumerate() {
            let map = self.red.user_map(k);
            let loc = user_local(user, map, y, noise)?;
            let w = u.adjoint() * map;
            let mut h = DMatrix::<f64>::zeros(np, np);
            if w.ncols() > 0 {
                // <E_p, H[E_q]> = Re tr(E_p P E_q P - E_p R E_q R) / (sigma^4 ln 2)
                let pm = &w * &loc.m_inv * w.adjoint();
                let rm = &w * &loc.a_inv * w.adjoint();
                let c = 1.0 / (noise * noise * std::f64::consts::LN_2);
                for p in 0..np {
                    for q in p..np {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &(a, b, v) in &units[p] {
                            for &(cc, d, x) in &units[q] {
                                acc += v * x * (pm[(b, cc)] * pm[(d, a)] - rm[(b, cc)] * rm[(d, a)]);
                            }
                        }
                        h[(p, q)] = c * acc.re;
                        h[(q, p)] = c * acc.re;
                    }
                }
            }
            values.push(loc.value);
            grads.push(fc.coords(&(u.adjoint() * loc.grad.as_matrix() * u)));
            hessians.push(h);
        }
        let (g, mut lag) = match tau {
            None => {
                let mut g = DVector::zeros(np);
                let mut h = DMatrix::zeros(np, np);
                for k in 0..values.len() {
                    g += &grads[k] * self.weights[k];
                    h += &hessians[k] * self.weights[k];
                }
                (g, h)
            }
            Some(tau) => {
                let scaled: Vec<f64> = values.iter().zip(&self.weights).map(|(c, b)| c / b).collect();
                let low = scaled.iter().copied().fold(f64::INFINITY, f64::min);
                let e: Vec<f64> = scaled.iter().map(|x| (-(x - low) / tau).exp()).collect();
                let z: f64 = e.iter().sum();
                let mut g = DVector::zeros(np);
                let mut h = DMatrix::zeros(np, np);
                let mut outer = DMatrix::zeros(np, np);
                for k in 0..values.len() {
                    let wk = e[k] / z;
                    let gk = &grads[k] / self.weights[k];
                    g += &gk * wk;
                    h += &hessians[k] * (wk / self.weights[k]);
                    outer += &gk * gk.transpose() * wk;
                }
                outer -= &g * g.transpose();
                h -= outer / tau;
                (g, h)
            }
        };

        let budget_active = y.trace() >= self.req.dl_budget * (1.0 - 1e-12);
        let gu = u.adjoint() * g_full.as_matrix() * u;
        let nu = if budget_active {
            (0..r).map(|i| gu[(i, i)].re).sum::<f64>() / r as f64
        } else {
            0.0
        };
        if r < n {
            let mut shifted = gu.view((r, r), (n - r, n - r)).into_owned();
            for i in 0..n - r {
                shifted[(i, i)] -= Complex64::new(nu, 0.0);
            }
            let gamma = shifted;
            for (q, entries) in units.iter().enumerate() {
                // Only units in the VW block contribute: K_VW = X^-1 E_VW Gamma.
                let mut k = CMatrix::zeros(r, n);
                for &(a, b, v) in entries {
                    if a < r && b >= r {
                        let row = gamma.row(b - r) * (v / eig.values[a]);
                        let mut dst = k.view_mut((a, r), (1, n - r));
                        dst += row;
                    }
                }
                lag.set_column(q, &(lag.column(q) + fc.coords(&k)));
            }
        }

        let neg = -(&lag + lag.transpose()) * 0.5;
        let diag_max = neg.diagonal().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut delta = 1e-14 * diag_max;
        let chol = loop {
            let mut shifted = neg.clone();
            for i in 0..np {
                shifted[(i, i)] += delta;
            }
            if let Some(c) = shifted.cholesky() {
                break c;
            }
            delta *= 100.0;
            if delta > diag_max {
                return Ok(None);
            }
        };
        let mut d = chol.solve(&g);
        if budget_active {
            let a = DVector::from_fn(np, |p, _| if p < r { 1.0 } else { 0.0 });
            let na = chol.solve(&a);
            d -= &na * (a.dot(&d) / a.dot(&na));
        }
        let slope = g.dot(&d);
        if !(slope > 0.0) {
            return Ok(None);
        }

        let e = fc.matrix(d.as_slice());
        let e_vv = e.view((0, 0), (r, r)).into_owned();
        let e_vw = e.view((0, r), (r, n - r)).into_owned();
        let x = real_diag(&eig.values[..r]);
        let budget = self.req.dl_budget;
        // Rank-preserving retraction: the WW block completes the Schur
        // complement, then the trace is pulled back onto the budget.
        let retract = |alpha: f64| -> Option<HermitianMatrix> {
            let top = &x + &e_vv * Complex64::new(alpha, 0.0);
            let top_h = HermitianMatrix::hermitian_part(&top);
            if top_h.eigen().values.last().copied().unwrap_or(0.0) <= 0.0 {
                return None;
            }
            let off = &e_vw * Complex64::new(alpha, 0.0);
            let inv = inverse_hpd(top_h.as_matrix()).ok()?;
            let mut blk = CMatrix::zeros(n, n);
            blk.view_mut((0, 0), (r, r)).copy_from(top_h.as_matrix());
            blk.view_mut((0, r), (r, n - r)).copy_from(&off);
            blk.view_mut((r, 0), (n - r, r)).copy_from(&off.adjoint());
            blk.view_mut((r, r), (n - r, n - r))
                .copy_from(&(off.adjoint() * inv * &off));
            let cand = HermitianMatrix::hermitian_part(&(u * blk * u.adjoint()));
            let tr = cand.trace();
            Some(if budget_active || tr > budget {
                cand.scale(budget / tr)
            } else {
                cand
            })
        };
        let mut alpha = 1.0;
        while alpha > 1e-12 {
            let cand = match retract(alpha) {
                Some(c) => c,
                None => {
                    alpha *= 0.5;
                    continue;
                }
            };
            let (fcand, gcand) = self.objective(&cand, tau)?;
            if fcand > f && fcand >= f + ARMIJO_C * alpha * slope - ASCENT_SLACK {
                return Ok(Some(NewtonStep {
                    y: cand,
                    f: fcand,
                    g: gcand,
                    full: alpha >= NEWTON_FULL_STEP,
                }));
            }
            alpha *= 0.5;
        }
        Ok(None)
    }
}

struct NewtonStep {
    y: HermitianMatrix,
    f: f64,
    g: HermitianMatrix,
    full: bool,
}

struct Stage {
    y: HermitianMatrix,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn ascend(
    prob: &Problem<'_>,
    y0: HermitianMatrix,
    tau: Option<f64>,
    opts: &OptimizerOptions,
) -> Result<Stage> {
    let budget = prob.req.dl_budget;
    let (initial, factor, bb) = match opts.step_rule {
        StepRule::Armijo { initial, factor } => (initial, factor, false),
        StepRule::BarzilaiBorwein { initial, factor } => (initial, factor, true),
    };
    let mut y = y0;
    let (mut f, mut g) = prob.objective(&y, tau)?;
    let mut trace = vec![f];
    let mut step = initial;
    // Newton is retried with exponential backoff after a failed attempt.
    let (mut newton_at, mut newton_backoff) = (0, 1);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if prob.projected_gradient_norm(&y, &g) <= opts.tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let accepted = if bb {
            // Spectral projected gradient: the BB step fixes the projected
            // point, backtracking runs along the feasible segment towards it.
            let d = project_trace_psd(&y.add(&g.scale(step)), budget).sub(&y);
            let slope = g.inner(&d);
            let mut a = 1.0;
            loop {
                let cand = y.add(&d.scale(a));
                let (fc, gc) = prob.objective(&cand, tau)?;
                if fc >= f + ARMIJO_C * a * slope - ASCENT_SLACK {
                    break Some((cand, d.scale(a), fc, gc, a * step));
                }
                a *= factor;
                if a < 1e-20 {
                    break None;
                }
            }
        } else {
            let mut t = step;
            loop {
                let cand = project_trace_psd(&y.add(&g.scale(t)), budget);
                let d = cand.sub(&y);
                let (fc, gc) = prob.objective(&cand, tau)?;
                if fc >= f + ARMIJO_C * g.inner(&d) - ASCENT_SLACK {
                    break Some((cand, d, fc, gc, t));
                }
                t *= factor;
                if t < 1e-20 {
                    break None;
                }
            }
        };
        let Some((cand, d, fc, gc, t)) = accepted else {
            break;
        };
        step = if bb {
            let r = gc.sub(&g);
            let sr = d.inner(&r);
            let ss = d.inner(&d);
            if sr < 0.0 && ss > 0.0 {
                (ss / -sr).clamp(1e-12, 1e12)
            } else {
                (2.0 * t).min(1e12)
            }
        } else {
            initial
        };
        y = cand;
        f = fc;
        g = gc;
        trace.push(f);
        if bb && iterations >= newton_at {
            let step = prob.manifold_newton(&y, f, &g, tau)?;
            let full = step.as_ref().is_some_and(|s| s.full);
            if let Some(s) = step {
                y = s.y;
                f = s.f;
                g = s.g;
                trace.push(f);
            }
            // Short Newton steps mean the quadratic model is off, so the
            // next attempt waits like a failed one.
            if full {
                newton_backoff = 1;
            } else {
                newton_at = iterations + newton_backoff;
                newton_backoff = (2 * newton_backoff).min(64);
            }
        }
    }
    if !converged && prob.projected_gradient_norm(&y, &g) <= opts.tol * (1.0 + f.abs()) {
        converged = true;
    }
    Ok(Stage {
        y,
        iterations,
        converged,
        trace,
    })
}

/// Maximizes the request's criterion over `{C_DL >= 0, tr C_DL <= p_DL}`.
///
/// Sum criteria are smooth and handled directly. Max-min criteria maximize a
/// log-sum-exp smoothing of `min_k C_k / beta_k`, annealed over
/// [`ANNEAL_SCHEDULE`], then polished at smaller temperatures; the reported
/// value is always the exact minimum.
pub fn maximize(
    req: &DesignRequest,
    reduction: &SubspaceReduction,
    opts: &OptimizerOptions,
) -> Result<OptimizerResult> {
    if reduction.num_users() != req.num_users() || reduction.num_antennas() != req.num_antennas() {
        return Err(invalid_input("reduction does not match the request"));
    }
    let n = reduction.dim();
    let prob = Problem {
        req,
        red: reduction,
        weights: req.effective_weights(),
    };
    if n == 0 {
        let y = HermitianMatrix::zeros(0);
        let (criterion_value, per_user) = prob.exact(&y)?;
        return Ok(OptimizerResult {
            covariance: y,
            iterations: 0,
            criterion_value,
            per_user,
            converged: true,
            kkt_residual: 0.0,
            trace: Vec::new(),
        });
    }
    let y0 = match &opts.initial {
        Some(y) if y.dim() == n => project_trace_psd(y, req.dl_budget),
        Some(_) => return Err(invalid_input("initial point has the wrong dimension")),
        None => HermitianMatrix::identity(n).scale(req.dl_budget / n as f64),
    };

    let start_value = prob.exact(&y0)?.0;
    let start = y0.clone();
    let mut traces = Vec::new();
    let mut iterations = 0;
    let (mut y, converged, last_tau) = if req.criterion.is_min() && req.num_users() > 1 {
        let mut y = y0;
        let mut converged = false;
        let mut last_tau = ANNEAL_SCHEDULE[0];
        for &tau in &ANNEAL_SCHEDULE {
            let st = ascend(&prob, y, Some(tau), opts)?;
            iterations += st.iterations;
            traces.push(st.trace);
            converged = st.converged;
            y = st.y;
            last_tau = tau;
        }
        let mut best = prob.exact(&y)?.0;
        for &tau in &POLISH_SCHEDULE {
            let st = ascend(&prob, y.clone(), Some(tau), opts)?;
            iterations += st.iterations;
            let value = prob.exact(&st.y)?.0;
            if value > best {
                best = value;
                y = st.y;
                converged = st.converged;
                last_tau = tau;
                traces.push(st.trace);
            }
        }
        (y, converged, Some(last_tau))
    } else {
        let st = ascend(&prob, y0, None, opts)?;
        iterations += st.iterations;
        traces.push(st.trace);
        (st.y, st.converged, None)
    };

    // Smoothed ascent can end below the starting point in the exact minimum.
    if prob.exact(&y)?.0 < start_value {
        y = start;
    }
    let (_, g) = prob.objective(&y, last_tau)?;
    let kkt_residual = prob.projected_gradient_norm(&y, &g) / (1.0 + y.frobenius_norm());
    let (criterion_value, per_user) = prob.exact(&y)?;
    Ok(OptimizerResult {
        covariance: y,
        iterations,
        criterion_value,
        per_user,
        converged,
        kkt_residual,
        trace: traces,
    })
}

/// Training sequence `S_DL = Q~ U diag(sqrt(v))` from the eigenpairs of `Y`
/// with `v >= rank_tol * v_max`.
pub fn extract_training_sequence(
    result: &OptimizerResult,
    reduction: &SubspaceReduction,
    rank_tol: f64,
) -> Result<TrainingSequence> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(invalid_param(format!("rank_tol = {rank_tol} must lie in (0, 1)")));
    }
    let m = reduction.num_antennas();
    let eig = result.covariance.eigen();
    let vmax = eig.values.first().copied().unwrap_or(0.0);
    if vmax <= 0.0 {
        return Ok(TrainingSequence::empty(m));
    }
    let keep = eig.values.iter().take_while(|&&v| v >= rank_tol * vmax).count();
    let scaled = CMatrix::from_fn(eig.vectors.nrows(), keep, |i, j| {
        eig.vectors[(i, j)] * eig.values[j].sqrt()
    });
    TrainingSequence::new(reduction.basis() * scaled)
}

/// Numerical rank of `Y` at relative threshold `rank_tol`.
pub fn numerical_rank(y: &HermitianMatrix, rank_tol: f64) -> usize {
    let vals = y.eigen().values;
    match vals.first() {
        Some(&vmax) if vmax > 0.0 => vals.iter().filter(|&&v| v >= rank_tol * vmax).count(),
        _ => 0,
    }
}

/// Capacity of a water-filled single user with budget `b`.
fn water_filled_capacity(lambda: &[f64], ul_snr: f64, b: f64, noise_var: f64) -> Result<f64> {
    if b <= 0.0 || lambda.is_empty() {
        return Ok(0.0);
    }
    let alloc = water_fill(lambda, b, noise_var, None)?;
    Ok(lambda
        .iter()
        .zip(&alloc.powers)
        .map(|(&l, &p)| mode_capacity(l, ul_snr, p / noise_var))
        .sum())
}

/// Smallest budget giving a water-filled user at least `target` bits
/// (`target` must be below the user's ceiling).
fn min_budget(lambda: &[f64], ul_snr: f64, target: f64, noise_var: f64) -> Result<f64> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = noise_var;
    while water_filled_capacity(lambda, ul_snr, hi, noise_var)? < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(invalid_param("capacity target above the user's ceiling"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if water_filled_capacity(lambda, ul_snr, mid, noise_var)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Weighted max-min allocation over per-user diagonal (parallel-mode) powers.
///
/// `users[k] = (lambda_k sorted descending, rho_k)`. Finds the largest common
/// level `c` such that giving every user the least budget reaching
/// `beta_k * c` fits in `budget`, then water-fills each user within its share.
/// Exact for mutually orthogonal users. Users with no modes are ignored.
pub fn max_min_diagonal(
    users: &[(Vec<f64>, f64)],
    weights: &[f64],
    budget: f64,
    noise_var: f64,
) -> Result<Vec<Vec<f64>>> {
    if users.len() != weights.len() {
        return Err(invalid_param("one weight per user is required"));
    }
    if !(budget > 0.0 && noise_var > 0.0) {
        return Err(invalid_param("budget and noise variance must be positive"));
    }
    let live: Vec<usize> = (0..users.len()).filter(|&k| !users[k].0.is_empty()).collect();
    let mut out: Vec<Vec<f64>> = users.iter().map(|(l, _)| vec![0.0; l.len()]).collect();
    if live.is_empty() {
        return Ok(out);
    }
    let ceiling = live
        .iter()
        .map(|&k| {
            let (l, rho) = &users[k];
            l.iter().map(|x| (x * rho).ln_1p()).sum::<f64>() / std::f64::consts::LN_2 / weights[k]
        })
        .fold(f64::INFINITY, f64::min);
    let need = |c: f64| -> Result<Vec<f64>> {
        live.iter()
            .map(|&k| min_budget(&users[k].0, users[k].1, weights[k] * c, noise_var))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, ceiling);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if need(mid)?.iter().sum::<f64>() <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shares = need(lo)?;
    let spent: f64 = shares.iter().sum();
    for (&k, share) in live.iter().zip(shares) {
        // Spread the bisection remainder proportionally; equal split at c = 0.
        let b = if spent > 0.0 {
            share * budget / spent
        } else {
            budget / live.len() as f64
        };
        out[k] = water_fill(&users[k].0, b, noise_var, None)?.powers;
    }
    Ok(out)
}
