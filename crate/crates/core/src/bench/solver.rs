//! Receding-horizon solvers behind one interface, created by name.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_bnb_miqp, brute_force_solve, MiqpOutcome, BRUTE_FORCE_MAX_BINARIES};
use crate::cuts::CutStore;
use crate::error::{Error, Result};
use crate::gbd::{solve_with_store, GbdConfig, GbdResult, GbdStatus};
use crate::mld::CondensedProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Converged,
    IterCap,
    Infeasible,
    Failed,
}

/// What one control step's solve produced.
#[derive(Debug, Clone)]
pub struct StepSolve {
    pub status: StepStatus,
    /// First-stage input `(u, λ1, λ2)`.
    pub input: Option<DVector<f64>>,
    pub delta: Option<DVector<f64>>,
    pub iterations: usize,
    pub lp_count: usize,
    pub qp_count: usize,
    pub lb: f64,
    pub ub: f64,
    pub cuts_in_store: usize,
    pub wall_time: f64,
    /// Iteration traces, for GBD solvers.
    pub lb_trace: Vec<f64>,
    pub ub_trace: Vec<f64>,
}

impl StepSolve {
    pub fn failed(wall_time: f64) -> Self {
        Self {
            status: StepStatus::Failed,
            input: None,
            delta: None,
            iterations: 0,
            lp_count: 0,
            qp_count: 0,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            cuts_in_store: 0,
            wall_time,
            lb_trace: Vec::new(),
            ub_trace: Vec::new(),
        }
    }
}

pub trait MpcSolver {
    fn name(&self) -> &str;

    fn solve(
        &mut self,
        problem: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StepSolve>;

    /// Persistent cut store, if the solver keeps one.
    fn store(&self) -> Option<&CutStore> {
        None
    }
}

/// Inputs available to solver factories.
pub struct SolverContext<'a> {
    pub problem: &'a CondensedProblem,
    pub gbd: &'a GbdConfig,
    /// Initial store for solvers that keep one.
    pub warm_store: Option<&'a CutStore>,
}

type Factory = Box<dyn Fn(&SolverContext<'_>) -> Result<Box<dyn MpcSolver>> + Send + Sync>;

pub struct SolverRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("gbd_warm", |ctx| {
            let store = match ctx.warm_store {
                Some(s) => {
                    s.check_problem(ctx.problem)?;
                    s.clone()
                }
                None => CutStore::new(ctx.problem),
            };
            Ok(Box::new(GbdWarm {
                store,
                cfg: GbdConfig {
                    enable_continual: true,
                    ..ctx.gbd.clone()
                },
            }))
        });
        r.register("gbd_cold", |ctx| {
            Ok(Box::new(GbdCold {
                cfg: GbdConfig {
                    enable_continual: false,
                    ..ctx.gbd.clone()
                },
            }))
        });
        r.register("bnb", |ctx| {
            Ok(Box::new(BranchAndBound {
                gap_tol: ctx.gbd.gap_tol,
                node_cap: ctx.gbd.node_cap,
                previous: None,
            }))
        });
        r.register("brute", |ctx| {
            let n = ctx.problem.n_bin();
            if n > BRUTE_FORCE_MAX_BINARIES {
                return Err(Error::GuardExceeded(n, BRUTE_FORCE_MAX_BINARIES));
            }
            Ok(Box::new(BruteForce))
        });
        r
    }
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SolverContext<'_>) -> Result<Box<dyn MpcSolver>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn create(&self, name: &str, ctx: &SolverContext<'_>) -> Result<Box<dyn MpcSolver>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))?;
        f(ctx)
    }
}

fn from_gbd(r: GbdResult, cuts_in_store: usize, wall_time: f64) -> StepSolve {
    let status = match r.status {
        GbdStatus::Converged => StepStatus::Converged,
        GbdStatus::IterCap => StepStatus::IterCap,
        GbdStatus::ProvenInfeasible => StepStatus::Infeasible,
    };
    StepSolve {
        status,
        input: r.u_star,
        delta: r.delta_star,
        iterations: r.stats.iterations,
        lp_count: r.stats.subproblem_lp_count,
        qp_count: r.stats.subproblem_qp_count,
        lb: r.lower_bound,
        ub: r.cost,
        cuts_in_store,
        wall_time,
        lb_trace: r.stats.lb_trace,
        ub_trace: r.stats.ub_trace,
    }
}

/// Benders with a store kept across every call.
pub struct GbdWarm {
    store: CutStore,
    cfg: GbdConfig,
}

impl MpcSolver for GbdWarm {
    fn name(&self) -> &str {
        "gbd_warm"
    }

    fn solve(
        &mut self,
        problem: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StepSolve> {
        let t = Instant::now();
        let r = solve_with_store(&mut self.store, problem, x_ini, theta, &self.cfg, None)?;
        Ok(from_gbd(r, self.store.len(), t.elapsed().as_secs_f64()))
    }

    fn store(&self) -> Option<&CutStore> {
        Some(&self.store)
    }
}

/// Benders from an empty store at every call.
pub struct GbdCold {
    cfg: GbdConfig,
}

impl MpcSolver for GbdCold {
    fn name(&self) -> &str {
        "gbd_cold"
    }

    fn solve(
        &mut self,
        problem: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StepSolve> {
        let t = Instant::now();
        let mut store = CutStore::new(problem);
        let r = solve_with_store(&mut store, problem, x_ini, theta, &self.cfg, None)?;
        Ok(from_gbd(r, store.len(), t.elapsed().as_secs_f64()))
    }
}

fn from_miqp(out: MiqpOutcome, problem: &CondensedProblem, wall_time: f64) -> StepSolve {
    match out {
        MiqpOutcome::Optimal(s) => StepSolve {
            status: StepStatus::Converged,
            input: Some(problem.input(&s.plan, 0)),
            delta: Some(s.delta),
            iterations: s.nodes,
            lp_count: s.lp_count,
            qp_count: s.qp_count,
            lb: s.root_bound,
            ub: s.cost,
            cuts_in_store: 0,
            wall_time,
            lb_trace: Vec::new(),
            ub_trace: Vec::new(),
        },
        MiqpOutcome::AllInfeasible {
            lp_count,
            qp_count,
            nodes,
        } => StepSolve {
            status: StepStatus::Infeasible,
            iterations: nodes,
            lp_count,
            qp_count,
            ..StepSolve::failed(wall_time)
        },
    }
}

/// Previous sequence advanced one stage, last stage repeated.
pub fn shift_delta(delta: &DVector<f64>, n_delta: usize) -> DVector<f64> {
    let n = delta.len();
    DVector::from_fn(n, |i, _| {
        let src = i + n_delta;
        if src < n {
            delta[src]
        } else {
            delta[n - n_delta + (i % n_delta)]
        }
    })
}

/// Branch and bound over QP relaxations, seeded with the shifted previous
/// solution.
pub struct BranchAndBound {
    gap_tol: f64,
    node_cap: usize,
    previous: Option<DVector<f64>>,
}

impl MpcSolver for BranchAndBound {
    fn name(&self) -> &str {
        "bnb"
    }

    fn solve(
        &mut self,
        problem: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StepSolve> {
        let t = Instant::now();
        let warm = self.previous.as_ref().map(|d| shift_delta(d, problem.n_delta));
        let out = baseline_bnb_miqp(problem, x_ini, theta, warm.as_ref(), self.gap_tol, self.node_cap)?;
        let s = from_miqp(out, problem, t.elapsed().as_secs_f64());
        self.previous = s.delta.clone();
        Ok(s)
    }
}

pub struct BruteForce;

impl MpcSolver for BruteForce {
    fn name(&self) -> &str {
        "brute"
    }

    fn solve(
        &mut self,
        problem: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StepSolve> {
        let t = Instant::now();
        let out = brute_force_solve(problem, x_ini, theta)?;
        Ok(from_miqp(out, problem, t.elapsed().as_secs_f64()))
    }
}
