//! Strategy sweeps over downlink SNR and the large-antenna convergence study.

use rayon::prelude::*;

use skg_core::capacity::capacity_woodbury;
use skg_core::channel::cross_user_coherence;
use skg_core::designer::{
    design_multi_user_large_antenna, design_single_user, design_uniform, DesignRequest,
};
use skg_core::optimizer::{
    extract_training_sequence, maximize, numerical_rank, reduce_subspace, OptimizerOptions,
};
use skg_core::{ArrayGeometry, TrainingSequence, UserStatistics};

use crate::config::{ScenarioConfig, Strategy};
use crate::error::{BenchError, Result};
use crate::scenario::{array_geometry, build_users, request};

/// Relative slack for the strategy ordering check.
pub const ORDER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub dl_snr_db: f64,
    pub strategy: Strategy,
    pub num_users: usize,
    pub per_user: Vec<f64>,
    pub avg_capacity: f64,
    pub sum_capacity: f64,
    /// Criterion evaluated on `per_user`.
    pub criterion_value: f64,
    pub pilots: usize,
    /// False only when the iterative optimizer hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flag {
    pub dl_snr_db: f64,
    pub strategy: Strategy,
    pub num_users: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub flags: Vec<Flag>,
}

struct Evaluated {
    sequence: TrainingSequence,
    pilots: usize,
    converged: bool,
    iterations: usize,
}

fn run_strategy(req: &DesignRequest, strategy: Strategy, rank_tol: f64) -> Result<Evaluated> {
    let closed = |sequence: TrainingSequence| Evaluated {
        pilots: sequence.num_pilots(),
        sequence,
        converged: true,
        iterations: 0,
    };
    match strategy {
        Strategy::Uniform => Ok(closed(design_uniform(req)?.sequence)),
        Strategy::LargeAntenna => Ok(closed(design_multi_user_large_antenna(req)?.sequence)),
        Strategy::Optimal if req.num_users() == 1 => Ok(closed(design_single_user(req)?.sequence)),
        Strategy::Optimal => {
            let bases: Vec<_> = req.users.iter().map(|u| u.modes.clone()).collect();
            let red = reduce_subspace(&bases)?;
            let warm = design_multi_user_large_antenna(req)?.sequence;
            let opts = OptimizerOptions {
                initial: Some(red.project(&warm.covariance())),
                ..OptimizerOptions::default()
            };
            let result = maximize(req, &red, &opts)?;
            Ok(Evaluated {
                sequence: extract_training_sequence(&result, &red, rank_tol)?,
                pilots: numerical_rank(&result.covariance, rank_tol),
                converged: result.converged,
                iterations: result.iterations,
            })
        }
    }
}

fn criterion_value(req: &DesignRequest, per_user: &[f64]) -> f64 {
    let w = req.effective_weights();
    if req.criterion.is_min() {
        per_user
            .iter()
            .zip(&w)
            .map(|(c, b)| c / b)
            .fold(f64::INFINITY, f64::min)
    } else {
        per_user.iter().zip(&w).map(|(c, b)| b * c).sum()
    }
}

fn sweep_point(cfg: &ScenarioConfig, users: &[UserStatistics], dl_snr_db: f64) -> Result<Vec<SweepRow>> {
    let req = request(cfg, users.to_vec(), dl_snr_db)?;
    cfg.strategies
        .iter()
        .map(|&strategy| {
            let ev = run_strategy(&req, strategy, cfg.rank_tol)?;
            let per_user = req
                .users
                .iter()
                .map(|u| capacity_woodbury(u, &ev.sequence, req.dl_noise_var))
                .collect::<skg_core::Result<Vec<_>>>()?;
            let sum: f64 = per_user.iter().sum();
            Ok(SweepRow {
                dl_snr_db,
                strategy,
                num_users: req.num_users(),
                avg_capacity: sum / per_user.len() as f64,
                sum_capacity: sum,
                criterion_value: criterion_value(&req, &per_user),
                per_user,
                pilots: ev.pilots,
                converged: ev.converged,
                iterations: ev.iterations,
            })
        })
        .collect()
}

fn find(rows: &[SweepRow], s: Strategy) -> Option<&SweepRow> {
    rows.iter().find(|r| r.strategy == s)
}

/// Checks `uniform <= large_antenna <= optimal` in the criterion and, for a
/// single user, that the large-antenna design matches the optimum.
fn ordering_flags(rows: &[SweepRow]) -> Vec<Flag> {
    let mut flags = Vec::new();
    let order = [Strategy::Uniform, Strategy::LargeAntenna, Strategy::Optimal];
    for pair in order.windows(2) {
        if let (Some(lo), Some(hi)) = (find(rows, pair[0]), find(rows, pair[1])) {
            let slack = ORDER_TOL * lo.criterion_value.abs().max(1.0);
            if lo.criterion_value > hi.criterion_value + slack {
                flags.push(Flag {
                    dl_snr_db: hi.dl_snr_db,
                    strategy: hi.strategy,
                    num_users: hi.num_users,
                    reason: format!(
                        "{} below {} ({:e} < {:e})",
                        hi.strategy.as_str(),
                        lo.strategy.as_str(),
                        hi.criterion_value,
                        lo.criterion_value
                    ),
                });
            }
        }
    }
    if let (Some(la), Some(opt)) = (find(rows, Strategy::LargeAntenna), find(rows, Strategy::Optimal)) {
        let slack = ORDER_TOL * opt.avg_capacity.abs().max(1.0);
        if la.num_users == 1 && (la.avg_capacity - opt.avg_capacity).abs() > slack {
            flags.push(Flag {
                dl_snr_db: la.dl_snr_db,
                strategy: la.strategy,
                num_users: 1,
                reason: "single-user large-antenna design differs from the optimum".into(),
            });
        }
    }
    for r in rows.iter().filter(|r| !r.converged) {
        flags.push(Flag {
            dl_snr_db: r.dl_snr_db,
            strategy: r.strategy,
            num_users: r.num_users,
            reason: format!("optimizer stopped at the iteration cap ({})", r.iterations),
        });
    }
    flags
}

fn sweep_users(cfg: &ScenarioConfig, users: &[UserStatistics], out: &mut SweepResult) -> Result<()> {
    let points: Vec<Vec<SweepRow>> = cfg
        .dl_snr_db
        .par_iter()
        .map(|&snr| sweep_point(cfg, users, snr))
        .collect::<Result<_>>()?;
    for rows in points {
        out.flags.extend(ordering_flags(&rows));
        out.rows.extend(rows);
    }
    Ok(())
}

/// Every configured strategy at every downlink SNR for all users, followed
/// by the first user alone when `single_user_baseline` is set. Rows are
/// ordered by (user count, SNR, strategy) in configuration order regardless
/// of how the points were scheduled.
pub fn run_capacity_sweep(cfg: &ScenarioConfig) -> Result<SweepResult> {
    let geom = array_geometry(cfg)?;
    let users = build_users(cfg, &geom)?;
    let mut out = SweepResult::default();
    sweep_users(cfg, &users, &mut out)?;
    if cfg.single_user_baseline && users.len() > 1 {
        sweep_users(cfg, &users[..1], &mut out)?;
    }
    Ok(out)
}

/// Same sweep as [`run_capacity_sweep`], additionally flagging pilot counts
/// that break the expected trends: the single-user optimum must not shrink
/// with SNR and no design may use more pilots than the users have modes in
/// total.
pub fn run_pilot_sweep(cfg: &ScenarioConfig) -> Result<SweepResult> {
    let geom = array_geometry(cfg)?;
    let users = build_users(cfg, &geom)?;
    let mut out = run_capacity_sweep(cfg)?;
    let total_modes: usize = users.iter().map(|u| u.modes.num_modes()).sum();
    let mut extra = Vec::new();
    for r in &out.rows {
        if r.pilots > total_modes.min(geom.num_antennas()) {
            extra.push(Flag {
                dl_snr_db: r.dl_snr_db,
                strategy: r.strategy,
                num_users: r.num_users,
                reason: format!("{} pilots exceed the {} available modes", r.pilots, total_modes),
            });
        }
    }
    let mut single: Vec<&SweepRow> = out
        .rows
        .iter()
        .filter(|r| r.num_users == 1 && r.strategy == Strategy::Optimal)
        .collect();
    single.sort_by(|a, b| a.dl_snr_db.total_cmp(&b.dl_snr_db));
    for w in single.windows(2) {
        if w[1].pilots < w[0].pilots {
            extra.push(Flag {
                dl_snr_db: w[1].dl_snr_db,
                strategy: Strategy::Optimal,
                num_users: 1,
                reason: format!("pilot count fell from {} to {}", w[0].pilots, w[1].pilots),
            });
        }
    }
    out.flags.extend(extra);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub num_antennas: usize,
    pub coherence: f64,
    pub large_antenna_avg: f64,
    pub optimal_avg: f64,
    pub capacity_gap_bits: f64,
    /// False when the optimizer stopped at its iteration cap.
    pub optimal_converged: bool,
}

/// For each `M` in `convergence.m_list`, places the configured users on a
/// ULA of `M` elements and compares the large-antenna design with the
/// optimizer. Users must be cluster-based so they can be re-evaluated at
/// every array size.
pub fn run_large_antenna_convergence(cfg: &ScenarioConfig) -> Result<Vec<ConvergenceRow>> {
    let conv = cfg.convergence.as_ref().ok_or_else(|| BenchError::Invalid {
        field: "convergence".into(),
        msg: "section is required for the convergence study".into(),
    })?;
    if cfg.users.len() < 2 {
        return Err(BenchError::Invalid {
            field: "users".into(),
            msg: "the convergence study needs at least two users".into(),
        });
    }
    if let Some(k) = cfg.users.iter().position(|u| u.covariance_file.is_some()) {
        return Err(BenchError::Invalid {
            field: format!("users[{k}].covariance_file"),
            msg: "fixed covariance files cannot be re-evaluated at other array sizes".into(),
        });
    }
    conv.m_list
        .par_iter()
        .map(|&m| {
            let geom = ArrayGeometry::ula(m, cfg.array.spacing)?;
            let users = build_users(cfg, &geom)?;
            let bases: Vec<_> = users.iter().map(|u| u.modes.clone()).collect();
            let coherence = cross_user_coherence(&bases)?;
            let req = request(cfg, users, conv.dl_snr_db)?;
            let avg = |strategy| -> Result<(f64, bool)> {
                let ev = run_strategy(&req, strategy, cfg.rank_tol)?;
                let mut total = 0.0;
                for u in &req.users {
                    total += capacity_woodbury(u, &ev.sequence, req.dl_noise_var)?;
                }
                Ok((total / req.num_users() as f64, ev.converged))
            };
            let (large_antenna_avg, _) = avg(Strategy::LargeAntenna)?;
            let (optimal_avg, optimal_converged) = avg(Strategy::Optimal)?;
            Ok(ConvergenceRow {
                num_antennas: m,
                coherence,
                large_antenna_avg,
                optimal_avg,
                capacity_gap_bits: optimal_avg - large_antenna_avg,
                optimal_converged,
            })
        })
        .collect()
}
