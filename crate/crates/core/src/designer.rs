//! Closed-form training designs and the water-filling solver.

use num_complex::Complex64;

use crate::capacity::{mode_capacity, TrainingSequence};
use crate::channel::{cross_user_coherence, SpatialModeBasis, UserStatistics};
use crate::error::{invalid_input, invalid_param, Result};
use crate::linalg::CMatrix;
use crate::optimizer::max_min_diagonal;

/// Powers below `PRUNE_REL * budget` are treated as inactive.
pub const PRUNE_REL: f64 = 1e-12;

/// Per-mode pilot powers `p_s = (mu - sigma^2 / lambda_s)^+`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    pub water_level: f64,
    pub active_count: usize,
}

impl PowerAllocation {
    /// Largest violation of the water-filling optimality conditions among the
    /// candidate modes (the first `max_active`): budget equality, the
    /// water-level identity on active modes and `mu <= sigma^2 / lambda` on
    /// inactive ones.
    pub fn kkt_residual(
        &self,
        lambda: &[f64],
        budget: f64,
        noise_var: f64,
        max_active: Option<usize>,
    ) -> f64 {
        let cand = max_active.unwrap_or(lambda.len()).min(lambda.len());
        let mut worst = (self.powers.iter().sum::<f64>() - budget).abs();
        for (s, (&p, &l)) in self.powers.iter().zip(lambda).enumerate() {
            let gap = self.water_level - noise_var / l;
            let v = if s >= cand {
                p.abs()
            } else if p > 0.0 {
                (p - gap).abs()
            } else {
                // Pruned modes may sit up to the pruning threshold above the level.
                (gap - PRUNE_REL * budget).max(0.0)
            };
            worst = worst.max(v).max((-p).max(0.0));
        }
        worst
    }
}

/// Exact water-filling by the sorted-candidate method.
///
/// `lambda` must be strictly positive and sorted non-increasing. With
/// `max_active = Some(t)` only the `t` strongest modes may receive power.
pub fn water_fill(
    lambda: &[f64],
    budget: f64,
    noise_var: f64,
    max_active: Option<usize>,
) -> Result<PowerAllocation> {
    if lambda.is_empty() {
        return Err(invalid_input("no modes to allocate power to"));
    }
    if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(invalid_input("mode gains must be strictly positive"));
    }
    if lambda.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid_input("mode gains must be sorted non-increasing"));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(invalid_param(format!("budget {budget} must be > 0")));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(invalid_param(format!("noise variance {noise_var} must be > 0")));
    }
    if max_active == Some(0) {
        return Err(invalid_param("pilot cap must be at least 1"));
    }
    let cand = max_active.unwrap_or(lambda.len()).min(lambda.len());
    let mut inv_sum = 0.0;
    let mut level = budget + noise_var / lambda[0];
    let mut active = 1;
    for (k, &l) in lambda[..cand].iter().enumerate() {
        inv_sum += noise_var / l;
        let mu = (budget + inv_sum) / (k + 1) as f64;
        if mu > noise_var / l {
            level = mu;
            active = k + 1;
        }
    }
    let mut powers: Vec<f64> = lambda
        .iter()
        .enumerate()
        .map(|(s, &l)| {
            if s < active {
                (level - noise_var / l).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    for p in powers.iter_mut() {
        if *p < PRUNE_REL * budget {
            *p = 0.0;
        }
    }
    let active_count = powers.iter().filter(|&&p| p > 0.0).count();
    Ok(PowerAllocation {
        powers,
        water_level: level,
        active_count,
    })
}

/// One mode entering a separable allocation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeTerm {
    pub lambda: f64,
    pub ul_snr: f64,
    pub weight: f64,
}

/// Maximizes `sum_i weight_i * mode_capacity(lambda_i, rho_i, p_i / sigma^2)`
/// subject to `sum p_i = budget`.
///
/// Each mode's stationarity condition is solved in closed form for a given
/// multiplier; the multiplier is found by bisection. Reduces to water-filling
/// when all uplink SNRs and weights coincide.
pub fn separable_allocation(modes: &[ModeTerm], budget: f64, noise_var: f64) -> Result<Vec<f64>> {
    if modes.is_empty() {
        return Err(invalid_input("no modes to allocate power to"));
    }
    if modes
        .iter()
        .any(|t| !(t.lambda > 0.0 && t.ul_snr > 0.0 && t.weight > 0.0))
    {
        return Err(invalid_input("mode gains, SNRs and weights must be positive"));
    }
    if !(budget > 0.0 && noise_var > 0.0) {
        return Err(invalid_param("budget and noise variance must be positive"));
    }
    // Marginal value (per unit of rho_DL, nats) at rho_DL = x:
    //   w l^2 r / ((1 + l x)(1 + l r + l x)).
    let dl_snr_at = |t: &ModeTerm, nu: f64| -> f64 {
        let lr = t.lambda * t.ul_snr;
        let c = t.weight * t.lambda * t.lambda * t.ul_snr / nu;
        // Positive root of u^2 + lr u - c = 0, cancellation-free.
        let u = 2.0 * c / (lr + (lr * lr + 4.0 * c).sqrt());
        ((u - 1.0) / t.lambda).max(0.0)
    };
    let spent = |nu: f64| -> f64 { modes.iter().map(|t| noise_var * dl_snr_at(t, nu)).sum() };
    let mut hi = modes
        .iter()
        .map(|t| t.weight * t.lambda * t.lambda * t.ul_snr / (1.0 + t.lambda * t.ul_snr))
        .fold(0.0, f64::max);
    let mut lo = hi;
    while spent(lo) < budget {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if spent(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut powers: Vec<f64> = modes.iter().map(|t| noise_var * dl_snr_at(t, lo)).collect();
    let total: f64 = powers.iter().sum();
    for p in powers.iter_mut() {
        *p *= budget / total;
        if *p < PRUNE_REL * budget {
            *p = 0.0;
        }
    }
    Ok(powers)
}

/// Optimization criterion across users.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    Sum,
    Min,
    WeightedSum,
    WeightedMin,
}

impl Criterion {
    pub fn is_min(self) -> bool {
        matches!(self, Criterion::Min | Criterion::WeightedMin)
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Criterion::WeightedSum | Criterion::WeightedMin)
    }
}

/// Everything a training design needs.
#[derive(Clone, Debug)]
pub struct DesignRequest {
    pub users: Vec<UserStatistics>,
    /// Training power budget `p_DL`.
    pub dl_budget: f64,
    pub dl_noise_var: f64,
    /// Pilot cap `T_max`.
    pub max_pilots: Option<usize>,
    pub criterion: Criterion,
    /// Priorities `beta_k`, positive and summing to one.
    pub weights: Option<Vec<f64>>,
}

impl DesignRequest {
    pub fn new(
        users: Vec<UserStatistics>,
        dl_budget: f64,
        dl_noise_var: f64,
        max_pilots: Option<usize>,
        criterion: Criterion,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(invalid_param("at least one user is required"));
        }
        let m = users[0].modes.num_antennas();
        if users.iter().any(|u| u.modes.num_antennas() != m) {
            return Err(invalid_input("users have different antenna counts"));
        }
        if !(dl_budget > 0.0 && dl_budget.is_finite()) {
            return Err(invalid_param(format!("DL budget {dl_budget} must be > 0")));
        }
        if !(dl_noise_var > 0.0 && dl_noise_var.is_finite()) {
            return Err(invalid_param(format!(
                "DL noise variance {dl_noise_var} must be > 0"
            )));
        }
        if max_pilots == Some(0) {
            return Err(invalid_param("max_pilots must be at least 1"));
        }
        if let Some(w) = &weights {
            if w.len() != users.len() {
                return Err(invalid_param(format!(
                    "weights: {} entries for {} users",
                    w.len(),
                    users.len()
                )));
            }
            if w.iter().any(|b| !(*b > 0.0)) {
                return Err(invalid_param("weights must be positive"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(invalid_param(format!("weights sum to {total}, expected 1")));
            }
        }
        Ok(Self {
            users,
            dl_budget,
            dl_noise_var,
            max_pilots,
            criterion,
            weights,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.users[0].modes.num_antennas()
    }

    /// Effective per-user priorities: ones for unweighted criteria, the given
    /// weights (or `1/K` each) for weighted ones.
    pub fn effective_weights(&self) -> Vec<f64> {
        let k = self.users.len();
        if !self.criterion.is_weighted() {
            return vec![1.0; k];
        }
        self.weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k])
    }

    /// Each user's modes restricted to the pilot cap.
    pub fn selected_modes(&self) -> Vec<SpatialModeBasis> {
        self.users
            .iter()
            .map(|u| match self.max_pilots {
                Some(t) => u.modes.strongest(t),
                None => u.modes.clone(),
            })
            .collect()
    }
}

/// A training sequence together with the per-mode powers that built it.
#[derive(Clone, Debug)]
pub struct Design {
    pub sequence: TrainingSequence,
    /// `mode_powers[k][s]`: power on mode `s` of user `k` (zero when inactive or not selected).
    pub mode_powers: Vec<Vec<f64>>,
    /// Cross-user coherence of the input bases, for `K >= 2`. The closed-form
    /// capacities are exact only when this is zero.
    pub coherence: Option<f64>,
}

impl Design {
    pub fn num_pilots(&self) -> usize {
        self.sequence.num_pilots()
    }

    /// Per-user capacities predicted by the parallel-mode closed form.
    pub fn closed_form_capacities(&self, req: &DesignRequest) -> Vec<f64> {
        req.users
            .iter()
            .zip(&self.mode_powers)
            .map(|(u, p)| {
                u.modes
                    .gains()
                    .iter()
                    .zip(p)
                    .map(|(&l, &p)| mode_capacity(l, u.uplink_snr, p / req.dl_noise_var))
                    .sum()
            })
            .collect()
    }
}

/// Stacks the modes and, for several users, rescales every power by one
/// common factor so the sequence spends exactly `budget`. Users that share a
/// slot interfere in `tr(S S^H)` unless their modes are orthogonal.
fn stack_within_budget(
    users: &[UserStatistics],
    mode_powers: &mut [Vec<f64>],
    budget: f64,
) -> Result<TrainingSequence> {
    let seq = stack_modes(users, mode_powers)?;
    let energy = seq.energy();
    if users.len() < 2 || energy <= 0.0 {
        return Ok(seq);
    }
    let c = budget / energy;
    for p in mode_powers.iter_mut().flatten() {
        *p *= c;
    }
    TrainingSequence::new(seq.matrix() * Complex64::new(c.sqrt(), 0.0))
}

/// Stacks `sum_k Q_k [P_k^{1/2} 0]`: user k's i-th active mode occupies pilot slot i.
fn stack_modes(users: &[UserStatistics], mode_powers: &[Vec<f64>]) -> Result<TrainingSequence> {
    let m = users[0].modes.num_antennas();
    let t = mode_powers
        .iter()
        .map(|p| p.iter().filter(|&&x| x > 0.0).count())
        .max()
        .unwrap_or(0);
    let mut pilots = CMatrix::zeros(m, t);
    for (u, powers) in users.iter().zip(mode_powers) {
        let q = u.modes.vectors();
        let mut slot = 0;
        for (s, &p) in powers.iter().enumerate() {
            if p > 0.0 {
                let amp = Complex64::new(p.sqrt(), 0.0);
                let mut col = pilots.column_mut(slot);
                col += q.column(s) * amp;
                slot += 1;
            }
        }
    }
    TrainingSequence::new(pilots)
}

fn coherence_of(req: &DesignRequest) -> Result<Option<f64>> {
    if req.num_users() < 2 {
        return Ok(None);
    }
    let bases: Vec<_> = req.users.iter().map(|u| u.modes.clone()).collect();
    cross_user_coherence(&bases).map(Some)
}

fn padded(powers: &[f64], len: usize) -> Vec<f64> {
    let mut v = powers.to_vec();
    v.resize(len, 0.0);
    v
}

/// Single-user optimum: `S_DL^H = P^{1/2} Q^H` with water-filled powers,
/// inactive rows dropped.
pub fn design_single_user(req: &DesignRequest) -> Result<Design> {
    if req.num_users() != 1 {
        return Err(invalid_param(format!(
            "single-user design got {} users",
            req.num_users()
        )));
    }
    let user = &req.users[0];
    if user.modes.num_modes() == 0 {
        return Ok(Design {
            sequence: TrainingSequence::empty(req.num_antennas()),
            mode_powers: vec![Vec::new()],
            coherence: None,
        });
    }
    let alloc = water_fill(
        user.modes.gains(),
        req.dl_budget,
        req.dl_noise_var,
        req.max_pilots,
    )?;
    let mode_powers = vec![alloc.powers];
    Ok(Design {
        sequence: stack_modes(&req.users, &mode_powers)?,
        mode_powers,
        coherence: None,
    })
}

/// Large-antenna multi-user design: every user's modes get their own powers
/// and share pilot slots, so `T = max_k S_k` regardless of `K`.
///
/// Sum criteria use a joint allocation over the pooled modes (plain
/// water-filling when all uplink SNRs agree); max-min criteria use
/// [`max_min_diagonal`].
pub fn design_multi_user_large_antenna(req: &DesignRequest) -> Result<Design> {
    let selected = req.selected_modes();
    let weights = req.effective_weights();
    let coherence = coherence_of(req)?;
    let mut mode_powers: Vec<Vec<f64>> = req.users.iter().map(|u| vec![0.0; u.modes.num_modes()]).collect();

    let pooled: Vec<(usize, usize, ModeTerm)> = selected
        .iter()
        .enumerate()
        .flat_map(|(k, b)| {
            let (rho, w) = (req.users[k].uplink_snr, weights[k]);
            b.gains().iter().enumerate().map(move |(s, &l)| {
                (
                    k,
                    s,
                    ModeTerm {
                        lambda: l,
                        ul_snr: rho,
                        weight: w,
                    },
                )
            })
        })
        .collect();
    if pooled.is_empty() {
        return Ok(Design {
            sequence: TrainingSequence::empty(req.num_antennas()),
            mode_powers,
            coherence,
        });
    }

    if req.criterion.is_min() {
        let per_user: Vec<(Vec<f64>, f64)> = selected
            .iter()
            .zip(&req.users)
            .map(|(b, u)| (b.gains().to_vec(), u.uplink_snr))
            .collect();
        let alloc = max_min_diagonal(&per_user, &weights, req.dl_budget, req.dl_noise_var)?;
        for (k, p) in alloc.into_iter().enumerate() {
            mode_powers[k] = padded(&p, req.users[k].modes.num_modes());
        }
    } else {
        let rho0 = req.users[0].uplink_snr;
        let uniform_terms = pooled
            .iter()
            .all(|(_, _, t)| t.ul_snr == rho0 && t.weight == weights[0]);
        let powers = if uniform_terms {
            let mut order: Vec<usize> = (0..pooled.len()).collect();
            order.sort_by(|&a, &b| pooled[b].2.lambda.total_cmp(&pooled[a].2.lambda));
            let sorted: Vec<f64> = order.iter().map(|&i| pooled[i].2.lambda).collect();
            let alloc = water_fill(&sorted, req.dl_budget, req.dl_noise_var, None)?;
            let mut p = vec![0.0; pooled.len()];
            for (rank, &i) in order.iter().enumerate() {
                p[i] = alloc.powers[rank];
            }
            p
        } else {
            let terms: Vec<ModeTerm> = pooled.iter().map(|x| x.2).collect();
            separable_allocation(&terms, req.dl_budget, req.dl_noise_var)?
        };
        for ((k, s, _), p) in pooled.iter().zip(powers) {
            mode_powers[*k][*s] = p;
        }
    }
    Ok(Design {
        sequence: stack_within_budget(&req.users, &mut mode_powers, req.dl_budget)?,
        mode_powers,
        coherence,
    })
}

/// Same structure as the large-antenna design with `p_DL` split evenly over
/// every selected mode of every user.
pub fn design_uniform(req: &DesignRequest) -> Result<Design> {
    let selected = req.selected_modes();
    let total: usize = selected.iter().map(|b| b.num_modes()).sum();
    let coherence = coherence_of(req)?;
    let share = if total > 0 {
        req.dl_budget / total as f64
    } else {
        0.0
    };
    let mut mode_powers: Vec<Vec<f64>> = selected
        .iter()
        .zip(&req.users)
        .map(|(b, u)| padded(&vec![share; b.num_modes()], u.modes.num_modes()))
        .collect();
    Ok(Design {
        sequence: stack_within_budget(&req.users, &mut mode_powers, req.dl_budget)?,
        mode_powers,
        coherence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity_determinant, capacity_parallel, capacity_woodbury};

    fn diag_user(m: usize, offset: usize, gains: &[f64], rho: f64) -> UserStatistics {
        let q = CMatrix::identity(m, m).columns(offset, gains.len()).into_owned();
        UserStatistics::new(SpatialModeBasis::new(q, gains.to_vec()).unwrap(), rho).unwrap()
    }

    fn request(users: Vec<UserStatistics>, budget: f64, t_max: Option<usize>) -> DesignRequest {
        DesignRequest::new(users, budget, 1.0, t_max, Criterion::Sum, None).unwrap()
    }

    /// Bisection on mu for sum (mu - s/l)^+ = budget.
    fn bisect_level(lambda: &[f64], budget: f64, noise: f64) -> f64 {
        let used = |mu: f64| lambda.iter().map(|l| (mu - noise / l).max(0.0)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, budget + noise / lambda[lambda.len() - 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if used(mid) > budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn water_fill_examples() {
        let a = water_fill(&[1.0, 1.0], 1.0, 1.0, None).unwrap();
        assert_eq!(a.powers, vec![0.5, 0.5]);
        assert_eq!(a.water_level, 1.5);

        let a = water_fill(&[2.0, 1.0], 1.0, 1.0, None).unwrap();
        assert!((bisect_level(&[2.0, 1.0], 1.0, 1.0) - 1.25).abs() < 1e-12);
        assert_eq!(a.water_level, 1.25);
        assert_eq!(a.powers, vec![0.75, 0.25]);

        let a = water_fill(&[2.0, 1.0], 0.2, 1.0, None).unwrap();
        assert!((bisect_level(&[2.0, 1.0], 0.2, 1.0) - 0.7).abs() < 1e-12);
        assert!((a.water_level - 0.7).abs() < 1e-15);
        assert!((a.powers[0] - 0.2).abs() < 1e-15);
        assert_eq!(a.powers[1], 0.0);
        assert_eq!(a.active_count, 1);
    }

    #[test]
    fn water_fill_errors() {
        assert!(matches!(
            water_fill(&[1.0, 2.0], 1.0, 1.0, None),
            Err(crate::Error::InvalidInput(_))
        ));
        assert!(water_fill(&[1.0], 0.0, 1.0, None).is_err());
        assert!(water_fill(&[1.0], 1.0, 1.0, Some(0)).is_err());
        assert!(water_fill(&[], 1.0, 1.0, None).is_err());
    }

    #[test]
    fn pilot_cap_concentrates_power() {
        let a = water_fill(&[2.0, 1.0], 1.0, 1.0, Some(1)).unwrap();
        assert_eq!(a.powers, vec![1.0, 0.0]);
        assert!(a.kkt_residual(&[2.0, 1.0], 1.0, 1.0, Some(1)) < 1e-15);
    }

    #[test]
    fn single_user_examples() {
        let one = request(vec![diag_user(3, 0, &[3.0], 1.0)], 2.0, None);
        let d = design_single_user(&one).unwrap();
        assert_eq!(d.num_pilots(), 1);
        assert!((d.sequence.energy() - 2.0).abs() < 1e-12);

        let req = request(vec![diag_user(2, 0, &[2.0, 1.0], 1.0)], 1.0, None);
        let d = design_single_user(&req).unwrap();
        let expected =
            (1.0f64 + 4.0 * 0.75 / (2.0 * 1.75 + 1.0)).log2() + (1.0 + 0.25 / (1.25 + 1.0f64)).log2();
        let user = &req.users[0];
        assert!((capacity_woodbury(user, &d.sequence, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((capacity_determinant(user, &d.sequence, 1.0).unwrap() - expected).abs() < 1e-12);

        let capped = request(req.users.clone(), 1.0, Some(1));
        let d = design_single_user(&capped).unwrap();
        assert_eq!(d.num_pilots(), 1);
        let expected = (1.0 + 4.0 / (2.0 * 2.0 + 1.0f64)).log2();
        assert!((capacity_woodbury(user, &d.sequence, 1.0).unwrap() - expected).abs() < 1e-12);

        let two = request(
            vec![diag_user(2, 0, &[1.0], 1.0), diag_user(2, 1, &[1.0], 1.0)],
            1.0,
            None,
        );
        assert!(matches!(
            design_single_user(&two),
            Err(crate::Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn capped_single_user_beats_rank_one_scan() {
        // Exhaustive scan over unit directions in the 2-mode span.
        let req = request(vec![diag_user(2, 0, &[2.0, 1.0], 1.0)], 1.0, Some(1));
        let user = &req.users[0];
        let best = capacity_woodbury(user, &design_single_user(&req).unwrap().sequence, 1.0).unwrap();
        let mut scan_best: f64 = 0.0;
        for i in 0..=200 {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 200.0;
            for j in 0..16 {
                let phi = std::f64::consts::TAU * j as f64 / 16.0;
                let v = CMatrix::from_column_slice(
                    2,
                    1,
                    &[
                        Complex64::new(theta.cos(), 0.0),
                        Complex64::from_polar(theta.sin(), phi),
                    ],
                );
                let seq = TrainingSequence::new(v).unwrap();
                scan_best = scan_best.max(capacity_woodbury(user, &seq, 1.0).unwrap());
            }
        }
        assert!(best >= scan_best - 1e-12);
        assert!((best - scan_best).abs() < 1e-9);
    }

    #[test]
    fn multi_user_reduces_to_single_user() {
        let req = request(vec![diag_user(4, 0, &[3.0, 1.0, 0.2], 2.0)], 1.5, None);
        let a = design_single_user(&req).unwrap();
        let b = design_multi_user_large_antenna(&req).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.mode_powers, b.mode_powers);
    }

    #[test]
    fn pilot_count_does_not_scale_with_users() {
        let users = vec![
            diag_user(6, 0, &[3.0, 2.0, 1.0], 10.0),
            diag_user(6, 3, &[2.5, 1.5], 10.0),
        ];
        let d = design_multi_user_large_antenna(&request(users, 100.0, None)).unwrap();
        assert_eq!(d.num_pilots(), 3);
        assert_eq!(d.coherence, Some(0.0));
        assert!((d.sequence.energy() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn pilot_cap_per_user() {
        let users = vec![
            diag_user(6, 0, &[3.0, 2.0, 1.0], 10.0),
            diag_user(6, 3, &[2.5, 1.5, 1.0], 10.0),
        ];
        let d = design_multi_user_large_antenna(&request(users, 100.0, Some(2))).unwrap();
        assert_eq!(d.num_pilots(), 2);
        assert_eq!(d.mode_powers[0][2], 0.0);
        assert_eq!(d.mode_powers[1][2], 0.0);
    }

    #[test]
    fn uniform_examples() {
        let req = request(vec![diag_user(2, 0, &[2.0, 1.0], 10.0)], 1.0, None);
        let u = design_uniform(&req).unwrap();
        assert_eq!(u.mode_powers[0], vec![0.5, 0.5]);
        let opt = design_single_user(&req).unwrap();
        let user = &req.users[0];
        assert!(
            capacity_woodbury(user, &u.sequence, 1.0).unwrap()
                <= capacity_woodbury(user, &opt.sequence, 1.0).unwrap()
        );

        let flat = request(vec![diag_user(3, 0, &[1.5, 1.5, 1.5], 1.0)], 2.0, None);
        let a = design_uniform(&flat).unwrap();
        let b = design_single_user(&flat).unwrap();
        assert!((a.sequence.matrix() - b.sequence.matrix()).norm() < 1e-14);
    }

    #[test]
    fn separable_matches_water_fill_for_common_snr() {
        let gains = [4.0, 2.0, 1.0, 0.3];
        let terms: Vec<ModeTerm> = gains
            .iter()
            .map(|&l| ModeTerm {
                lambda: l,
                ul_snr: 7.0,
                weight: 0.5,
            })
            .collect();
        for budget in [0.1, 1.0, 10.0] {
            let p = separable_allocation(&terms, budget, 1.0).unwrap();
            let w = water_fill(&gains, budget, 1.0, None).unwrap();
            for (a, b) in p.iter().zip(&w.powers) {
                assert!((a - b).abs() < 1e-9 * budget, "{p:?} vs {:?}", w.powers);
            }
        }
    }

    #[test]
    fn weighted_sum_favors_heavier_user() {
        let users = vec![diag_user(2, 0, &[1.0], 10.0), diag_user(2, 1, &[1.0], 10.0)];
        let req = DesignRequest::new(
            users,
            2.0,
            1.0,
            None,
            Criterion::WeightedSum,
            Some(vec![0.6, 0.4]),
        )
        .unwrap();
        let d = design_multi_user_large_antenna(&req).unwrap();
        assert!(
            d.mode_powers[0][0] > d.mode_powers[1][0] && d.mode_powers[1][0] > 0.0,
            "{:?}",
            d.mode_powers
        );
        assert!((d.mode_powers[0][0] + d.mode_powers[1][0] - 2.0).abs() < 1e-12);
        // Stationarity: weighted marginals agree.
        let h = 1e-6;
        let marg = |k: usize| {
            let p = d.mode_powers[k][0];
            let w = req.effective_weights()[k];
            w * (capacity_parallel(&[1.0], 10.0, &[p + h]).unwrap()
                - capacity_parallel(&[1.0], 10.0, &[p - h]).unwrap())
                / (2.0 * h)
        };
        assert!((marg(0) - marg(1)).abs() < 1e-6);
    }

    #[test]
    fn request_validation() {
        let u = diag_user(2, 0, &[1.0], 1.0);
        let w = Some(vec![0.5, 0.6]);
        assert!(DesignRequest::new(
            vec![u.clone(), u.clone()],
            1.0,
            1.0,
            None,
            Criterion::WeightedSum,
            w
        )
        .is_err());
        assert!(DesignRequest::new(vec![], 1.0, 1.0, None, Criterion::Sum, None).is_err());
        assert!(DesignRequest::new(vec![u.clone()], -1.0, 1.0, None, Criterion::Sum, None).is_err());
        let other = diag_user(3, 0, &[1.0], 1.0);
        assert!(DesignRequest::new(vec![u, other], 1.0, 1.0, None, Criterion::Sum, None).is_err());
    }
}
