//! Benders loop over a [`CondensedProblem`]: master for the binaries, LP
//! screen and QP subproblem for the continuous part, with cuts retained in a
//! [`CutStore`] across calls.

use std::collections::HashSet;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cuts::{AddOutcome, CutStore, FeasibilityCut, OptimalityCut};
use crate::error::{Error, Result};
use crate::lp::{self, Feasibility};
use crate::master::{self, MasterOutcome, DEFAULT_NODE_CAP};
use crate::mld::CondensedProblem;
use crate::qp::{self, QpOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdConfig {
    /// Relative gap `G_a` at which the loop stops.
    pub gap_tol: f64,
    /// Radius of the optimality-cut dedup ball.
    pub eps: f64,
    pub max_iter: usize,
    pub enable_shifted_cuts: bool,
    pub enable_continual: bool,
    /// Update the upper bound even when the new optimality cut is a duplicate.
    pub ub_update_outside_dedup: bool,
    pub node_cap: usize,
}

impl Default for GbdConfig {
    fn default() -> Self {
        Self {
            gap_tol: 0.1,
            eps: 1e-3,
            max_iter: 500,
            enable_shifted_cuts: true,
            enable_continual: true,
            ub_update_outside_dedup: true,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

impl GbdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gap_tol.is_nan() || self.gap_tol <= 0.0 {
            return Err(Error::Config("gap_tol must be positive".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbdStatus {
    Converged,
    ProvenInfeasible,
    IterCap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub lb_trace: Vec<f64>,
    /// Best upper bound after each iteration; infinite until an incumbent exists.
    pub ub_trace: Vec<f64>,
    pub cuts_added_feas: usize,
    pub cuts_added_shifted: usize,
    pub cuts_added_opt: usize,
    pub cuts_deduped: usize,
    pub subproblem_lp_count: usize,
    pub subproblem_qp_count: usize,
    pub master_nodes: usize,
    pub stalls: usize,
    pub time_master: f64,
    pub time_lp: f64,
    pub time_qp: f64,
}

#[derive(Debug, Clone)]
pub struct GbdResult {
    pub status: GbdStatus,
    /// First-stage input of the incumbent plan.
    pub u_star: Option<DVector<f64>>,
    pub delta_star: Option<DVector<f64>>,
    pub plan: Option<DVector<f64>>,
    /// Upper bound at termination.
    pub cost: f64,
    pub lower_bound: f64,
    pub stats: SolveStats,
}

/// Relative gap `|z_P − z_D| / |z_P|`; `+∞` while no primal bound exists.
pub fn mip_gap(z_p: f64, z_d: f64) -> f64 {
    if !z_p.is_finite() || !z_d.is_finite() {
        return f64::INFINITY;
    }
    if z_p.abs() < 1e-12 {
        return if (z_p - z_d).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    }
    (z_p - z_d).abs() / z_p.abs()
}

/// Solve with a fresh store.
pub fn solve_cold(
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
    cfg: &GbdConfig,
) -> Result<GbdResult> {
    let mut store = CutStore::new(problem);
    solve_with_store(&mut store, problem, x_ini, theta, cfg, None)
}

/// Solve reusing `store`; a cold solve when continual learning is disabled.
pub fn solve_continual(
    store: &mut CutStore,
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
    cfg: &GbdConfig,
) -> Result<GbdResult> {
    if cfg.enable_continual {
        solve_with_store(store, problem, x_ini, theta, cfg, None)
    } else {
        solve_cold(problem, x_ini, theta, cfg)
    }
}

fn key(delta: &DVector<f64>) -> Vec<bool> {
    delta.iter().map(|v| *v > 0.5).collect()
}

/// The loop itself. `warm` seeds the first master solve's incumbent.
pub fn solve_with_store(
    store: &mut CutStore,
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
    cfg: &GbdConfig,
    warm: Option<&DVector<f64>>,
) -> Result<GbdResult> {
    cfg.validate()?;
    store.check_problem(problem)?;
    problem.check_args(x_ini, theta, &DVector::zeros(problem.n_bin()))?;
    store.reparameterize(problem, x_ini, theta);

    let mut stats = SolveStats::default();
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut best: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut status = GbdStatus::IterCap;

    for _ in 0..cfg.max_iter {
        let t0 = Instant::now();
        let mp = store.master_problem();
        let seed = best.as_ref().map(|(d, _)| d).or(warm);
        let outcome = master::solve_master(&mp, seed, cfg.node_cap)?;
        stats.time_master += t0.elapsed().as_secs_f64();
        let sol = match outcome {
            MasterOutcome::Infeasible => {
                status = GbdStatus::ProvenInfeasible;
                break;
            }
            MasterOutcome::Solved(s) => s,
        };
        stats.master_nodes += sol.nodes;
        stats.iterations += 1;
        if sol.z0 < lb - 1e-9 * (1.0 + lb.abs()) {
            warn!("master bound decreased from {lb} to {}", sol.z0);
        }
        lb = sol.z0;
        let delta = sol.delta;

        if !seen.insert(key(&delta)) {
            stats.stalls += 1;
            debug!("master repeated a binary sequence; stopping");
            stats.lb_trace.push(lb);
            stats.ub_trace.push(ub);
            status = if best.is_some() && mip_gap(ub, lb) <= cfg.gap_tol {
                GbdStatus::Converged
            } else {
                GbdStatus::IterCap
            };
            break;
        }

        let t1 = Instant::now();
        let lp = problem.feasibility_lp(x_ini, theta, &delta);
        let screen = lp::solve_feasibility(&lp)?;
        stats.subproblem_lp_count += 1;
        stats.time_lp += t1.elapsed().as_secs_f64();

        match screen {
            Feasibility::Feasible { x } => {
                let t2 = Instant::now();
                let qp = problem.subproblem(x_ini, theta, &delta);
                let out = qp::solve_qp_from(&qp, Some(&x))?;
                stats.subproblem_qp_count += 1;
                stats.time_qp += t2.elapsed().as_secs_f64();
                let QpOutcome::Optimal(qs) = out else {
                    return Err(Error::NumericalFailure(
                        "QP infeasible after a feasible LP screen".into(),
                    ));
                };
                let cut = OptimalityCut::new(problem, &qs, &delta, x_ini, theta)?;
                let added = store.try_add_optimality(cut, cfg.eps);
                match added {
                    AddOutcome::Added => stats.cuts_added_opt += 1,
                    AddOutcome::Duplicate => stats.cuts_deduped += 1,
                }
                let may_update = added == AddOutcome::Added || cfg.ub_update_outside_dedup;
                if may_update && qs.f_star < ub {
                    ub = qs.f_star;
                    best = Some((delta.clone(), qs.x_star));
                }
            }
            Feasibility::Infeasible { cert } => {
                let cut = FeasibilityCut::from_certificate(problem, &cert, x_ini, theta)?;
                let shifted: Vec<FeasibilityCut> = if cfg.enable_shifted_cuts {
                    (1..problem.horizon)
                        .filter_map(|m| match cut.shifted(problem, m, x_ini, theta) {
                            Ok(c) => Some(Ok(c)),
                            Err(Error::ShiftProducedZero) => None,
                            Err(e) => Some(Err(e)),
                        })
                        .collect::<Result<_>>()?
                } else {
                    Vec::new()
                };
                for c in std::iter::once(cut).chain(shifted) {
                    let shifted = c.origin != crate::cuts::CutOrigin::Direct;
                    match store.try_add_feasibility(c) {
                        AddOutcome::Added if shifted => {
                            stats.cuts_added_feas += 1;
                            stats.cuts_added_shifted += 1;
                        }
                        AddOutcome::Added => stats.cuts_added_feas += 1,
                        AddOutcome::Duplicate => stats.cuts_deduped += 1,
                    }
                }
            }
        }

        stats.lb_trace.push(lb);
        stats.ub_trace.push(ub);
        if mip_gap(ub, lb) <= cfg.gap_tol {
            status = if best.is_some() {
                GbdStatus::Converged
            } else {
                GbdStatus::IterCap
            };
            break;
        }
    }

    let (delta_star, plan) = match best {
        Some((d, x)) => (Some(d), Some(x)),
        None => (None, None),
    };
    Ok(GbdResult {
        status,
        u_star: plan.as_ref().map(|x| problem.input(x, 0)),
        delta_star,
        plan,
        cost: ub,
        lower_bound: lb,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_rules() {
        assert!((mip_gap(10.0, 9.0) - 0.1).abs() < 1e-15);
        assert_eq!(mip_gap(0.0, 0.0), 0.0);
        assert_eq!(mip_gap(0.0, -1.0), f64::INFINITY);
        assert_eq!(mip_gap(f64::INFINITY, 1.0), f64::INFINITY);
        assert_eq!(mip_gap(5.0, f64::NEG_INFINITY), f64::INFINITY);
    }

    #[test]
    fn config_defaults_from_empty_table() {
        let c: GbdConfig = toml::from_str("").unwrap();
        assert_eq!(c, GbdConfig::default());
        assert_eq!(c.gap_tol, 0.1);
        assert!(GbdConfig { max_iter: 0, ..c.clone() }.validate().is_err());
        assert!(GbdConfig { gap_tol: 0.0, ..c }.validate().is_err());
    }
}
