use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::plant::{wall_motion, Plant, WallConfig, WallState};
use super::solver::{MpcSolver, StepSolve, StepStatus};
use crate::error::Result;
use crate::mld::{CartPoleParams, CondensedProblem};

const WALL_STREAM: u64 = 1;
const TORQUE_STREAM: u64 = 2;

/// Settings shared by every episode of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub seed: u64,
    pub steps: usize,
    pub params: CartPoleParams,
    /// Std of the torque on the pole, N·m.
    pub disturbance_sigma: f64,
    pub wall: WallConfig,
    pub x0: [f64; 4],
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 200,
            params: CartPoleParams::default(),
            disturbance_sigma: 8.0,
            wall: WallConfig::default(),
            x0: [0.0, 10f64.to_radians(), 0.0, 0.0],
        }
    }
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub state: Vec<f64>,
    pub walls: [f64; 2],
    /// Applied force.
    pub input: f64,
    pub delta: Option<Vec<u8>>,
    pub iterations: usize,
    pub lp_count: usize,
    pub qp_count: usize,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub cuts_in_store: usize,
    pub contact_involved: bool,
    pub status: StepStatus,
}

#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub solver: String,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Solve wall time per step, seconds.
    pub wall_times: Vec<f64>,
    /// Per-step lower-bound traces (empty for non-GBD solvers).
    pub lb_traces: Vec<Vec<f64>>,
    pub ub_traces: Vec<Vec<f64>>,
}

impl EpisodeReport {
    pub fn infeasible(&self) -> bool {
        self.records.iter().any(|r| r.status == StepStatus::Infeasible)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status == StepStatus::Failed).count()
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One `(x_ini, θ)` instance of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x_ini: DVector<f64>,
    pub theta: DVector<f64>,
}

fn record(step: usize, time: f64, inst: &Instance, s: &StepSolve, force: f64) -> StepRecord {
    let delta: Option<Vec<u8>> = s
        .delta
        .as_ref()
        .map(|d| d.iter().map(|v| u8::from(*v > 0.5)).collect());
    let contact_involved = delta.as_ref().is_some_and(|d| d.iter().any(|v| *v != 0));
    StepRecord {
        step,
        time,
        state: inst.x_ini.iter().copied().collect(),
        walls: [inst.theta[0], inst.theta[1]],
        input: force,
        delta,
        iterations: s.iterations,
        lp_count: s.lp_count,
        qp_count: s.qp_count,
        lb: finite(s.lb),
        ub: finite(s.ub),
        cuts_in_store: s.cuts_in_store,
        contact_involved,
        status: s.status,
    }
}

/// Solve failures are recorded and the step continues with zero force.
fn solve_step(
    solver: &mut dyn MpcSolver,
    problem: &CondensedProblem,
    inst: &Instance,
) -> StepSolve {
    match solver.solve(problem, &inst.x_ini, &inst.theta) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{} failed: {e}", solver.name());
            StepSolve::failed(0.0)
        }
    }
}

/// Closed-loop run: observe, solve, apply the first force, step the plant.
pub fn simulate_episode(
    cfg: &EpisodeConfig,
    problem: &CondensedProblem,
    solver: &mut dyn MpcSolver,
) -> Result<EpisodeReport> {
    cfg.params.validate()?;
    let plant = Plant::new(&cfg.params);
    let mut wall_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    wall_rng.set_stream(WALL_STREAM);
    let mut walls = WallState::new(wall_rng);
    let mut torque_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    torque_rng.set_stream(TORQUE_STREAM);

    let mut x = DVector::from_column_slice(&cfg.x0);
    let mut report = EpisodeReport {
        solver: solver.name().to_string(),
        seed: cfg.seed,
        records: Vec::with_capacity(cfg.steps),
        wall_times: Vec::with_capacity(cfg.steps),
        lb_traces: Vec::new(),
        ub_traces: Vec::new(),
    };
    for step in 0..cfg.steps {
        let t = step as f64 * cfg.params.dt;
        let (d1, d2) = wall_motion(t, &mut walls, &cfg.wall, cfg.params.d_max);
        let inst = Instance {
            x_ini: x.clone(),
            theta: DVector::from_vec(vec![d1, d2]),
        };
        let s = solve_step(solver, problem, &inst);
        let force = s.input.as_ref().map_or(0.0, |u| u[0]);
        let z: f64 = torque_rng.sample(StandardNormal);
        let torque = cfg.disturbance_sigma * z;
        x = plant.step(&x, force, d1, d2, torque);
        report.records.push(record(step, t, &inst, &s, force));
        report.wall_times.push(s.wall_time);
        report.lb_traces.push(s.lb_trace);
        report.ub_traces.push(s.ub_trace);
    }
    Ok(report)
}

/// The `(x_ini, θ)` stream a report saw.
pub fn instances(report: &EpisodeReport) -> Vec<Instance> {
    report
        .records
        .iter()
        .map(|r| Instance {
            x_ini: DVector::from_vec(r.state.clone()),
            theta: DVector::from_vec(r.walls.to_vec()),
        })
        .collect()
}

/// Open-loop replay of a recorded instance stream.
pub fn replay(
    stream: &[Instance],
    problem: &CondensedProblem,
    solver: &mut dyn MpcSolver,
    dt: f64,
) -> EpisodeReport {
    let mut report = EpisodeReport {
        solver: solver.name().to_string(),
        seed: 0,
        records: Vec::with_capacity(stream.len()),
        wall_times: Vec::with_capacity(stream.len()),
        lb_traces: Vec::new(),
        ub_traces: Vec::new(),
    };
    for (step, inst) in stream.iter().enumerate() {
        let s = solve_step(solver, problem, inst);
        let force = s.input.as_ref().map_or(0.0, |u| u[0]);
        report.records.push(record(step, step as f64 * dt, inst, &s, force));
        report.wall_times.push(s.wall_time);
        report.lb_traces.push(s.lb_trace);
        report.ub_traces.push(s.ub_trace);
    }
    report
}
