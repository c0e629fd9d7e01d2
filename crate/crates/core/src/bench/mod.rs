//! Closed-loop cart-pole benchmark between moving soft walls.

mod baselines;
mod episode;
mod plant;
mod solver;
mod suite;

pub use baselines::{
    baseline_bnb_miqp, brute_force_solve, evaluate_delta, MiqpOutcome, MiqpSolution,
    BRUTE_FORCE_MAX_BINARIES,
};
pub use episode::{
    instances, replay, simulate_episode, EpisodeConfig, EpisodeReport, Instance, StepRecord,
};
pub use plant::{plant_step, wall_motion, Plant, WallConfig, WallState, WALL_MARGIN};
pub use solver::{
    shift_delta, BranchAndBound, BruteForce, GbdCold, GbdWarm, MpcSolver, SolverContext,
    SolverRegistry, StepSolve, StepStatus,
};
pub use suite::{
    run_benchmark, run_suite, EpisodeSummary, SolverSummary, SuiteConfig, SuiteOutcome, Summary,
    SummaryMeta,
};
