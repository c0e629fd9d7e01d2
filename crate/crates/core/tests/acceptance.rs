//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints its PASS/FAIL line even when it passes.

mod common;

use std::path::{Path, PathBuf};

use gbd_mpc::bench::{
    brute_force_solve, evaluate_delta, instances, replay, run_suite, simulate_episode,
    EpisodeReport, MiqpOutcome, SolverContext, SolverRegistry, StepStatus, SuiteConfig,
};
use gbd_mpc::cuts::{CutOrigin, CutStore, FeasibilityCut, OptimalityCut};
use gbd_mpc::gbd::{mip_gap, solve_with_store, GbdConfig, GbdStatus};
use gbd_mpc::lp;
use gbd_mpc::mld::CondensedProblem;
use gbd_mpc::qp::unconstrained_minimizer;
use nalgebra::{DMatrix, DVector};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_deltas, cartpole, random_instance};

struct Check {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

type Traces = Vec<(Vec<f64>, Vec<f64>)>;

/// A cold solve kept with its store and instance for the cut checks.
struct Solved {
    x: DVector<f64>,
    theta: DVector<f64>,
    store: CutStore,
}

fn default_config() -> SuiteConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    SuiteConfig::load(&path).expect("default config")
}

fn oracle_sweep(p: &CondensedProblem, traces: &mut Traces) -> (Check, Vec<Solved>) {
    let cfg = GbdConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut bad, mut contact, mut infeasible) = (Vec::new(), 0, 0);
    let mut solved = Vec::new();
    for i in 0..100 {
        let (x, theta) = random_instance(&mut rng);
        let oracle = brute_force_solve(p, &x, &theta).unwrap();
        let mut store = CutStore::new(p);
        let r = solve_with_store(&mut store, p, &x, &theta, &cfg, None).unwrap();
        traces.push((r.stats.lb_trace.clone(), r.stats.ub_trace.clone()));
        match oracle {
            MiqpOutcome::Optimal(s) => {
                contact += usize::from(s.delta.iter().any(|v| *v > 0.5));
                let tol = 1e-9 * (1.0 + s.cost.abs());
                let ok = r.status == GbdStatus::Converged
                    && mip_gap(r.cost, s.cost) <= cfg.gap_tol
                    && r.lower_bound <= s.cost + tol
                    && s.cost <= r.cost + tol;
                if !ok {
                    bad.push(format!(
                        "#{i}: {:?} lb {} ub {} oracle {}",
                        r.status, r.lower_bound, r.cost, s.cost
                    ));
                }
            }
            MiqpOutcome::AllInfeasible { .. } => {
                infeasible += 1;
                if r.status != GbdStatus::ProvenInfeasible {
                    bad.push(format!("#{i}: oracle infeasible, solver {:?}", r.status));
                }
            }
        }
        solved.push(Solved { x, theta, store });
    }
    let check = Check {
        id: 1,
        name: "oracle equivalence at N=4",
        pass: bad.is_empty(),
        detail: format!(
            "100 instances, {contact} with contact optimum, {infeasible} infeasible, {} mismatches {:?}",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    };
    (check, solved)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn farkas_alternatives() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut feasible, mut errors) = (0, Vec::new());
    for i in 0..1000 {
        let n = rng.random_range(1..=5);
        let me = rng.random_range(0..=2.min(n));
        let mi = rng.random_range(1..=6);
        let a = random_matrix(&mut rng, me, n);
        let c = random_matrix(&mut rng, mi, n);
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x0;
        let d = &c * &x0 + DVector::from_fn(mi, |_, _| rng.random_range(-1.0..0.6));
        match lp::verify_alternatives(&a, &b, &c, &d) {
            Ok(r) => feasible += usize::from(r.feasible),
            Err(e) => errors.push(format!("#{i}: {e}")),
        }
    }
    Check {
        id: 2,
        name: "theorem of alternatives",
        pass: errors.is_empty(),
        detail: format!(
            "1000 instances, {feasible} feasible, {} infeasible, {} exceptions {:?}",
            1000 - feasible - errors.len(),
            errors.len(),
            errors.iter().take(3).collect::<Vec<_>>()
        ),
    }
}

/// Each store is checked at its own instance and, re-parameterized, at the
/// next instance of the sweep.
fn cut_soundness(p: &CondensedProblem, solved: &[Solved]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut feas_checked, mut opt_checked, mut feas_cuts, mut opt_cuts) = (0, 0, 0, 0);
    let mut bad = Vec::new();
    for (i, s) in solved.iter().enumerate() {
        let feasible: Vec<(DVector<f64>, f64)> = all_deltas(p.n_bin())
            .filter_map(|d| {
                let v = evaluate_delta(p, &s.x, &s.theta, &d, &mut 0, &mut 0).unwrap();
                v.map(|(f, _)| (d, f))
            })
            .collect();
        let mut stores = vec![s.store.clone()];
        if i > 0 {
            let mut prev = solved[i - 1].store.clone();
            prev.reparameterize(p, &s.x, &s.theta);
            stores.push(prev);
        }
        for store in &stores {
            for cut in store.feasibility_cuts() {
                feas_cuts += 1;
                let violating = all_deltas(p.n_bin()).filter(|d| cut.eval(d) < -1e-7);
                for d in violating.choose_multiple(&mut rng, 50) {
                    feas_checked += 1;
                    let lp = p.feasibility_lp(&s.x, &s.theta, &d);
                    if lp::solve_feasibility(&lp).unwrap().is_feasible() {
                        bad.push(format!("#{i} {:?} cut feasible at {}", cut.origin, d.transpose()));
                    }
                }
            }
            for cut in store.optimality_cuts() {
                opt_cuts += 1;
                for (d, v) in feasible.iter().choose_multiple(&mut rng, 20) {
                    opt_checked += 1;
                    if cut.eval(d) > v + 1e-6 {
                        bad.push(format!("#{i} optimality cut {} above value {v}", cut.eval(d)));
                    }
                }
            }
        }
    }
    Check {
        id: 3,
        name: "cut soundness",
        pass: bad.is_empty() && feas_checked > 0 && opt_checked > 0,
        detail: format!(
            "{feas_cuts} feasibility cuts at {feas_checked} violating points, {opt_cuts} optimality cuts at {opt_checked} feasible points (own and next instance), {} exceptions {:?}",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    }
}

fn shifted_dual_feasibility(p: &CondensedProblem, solved: &[Solved]) -> Check {
    let mut cuts: Vec<FeasibilityCut> = Vec::new();
    for s in solved {
        for c in s.store.feasibility_cuts() {
            match c.origin {
                CutOrigin::Shifted(_) => cuts.push(c.clone()),
                CutOrigin::Direct => {
                    cuts.extend((1..p.horizon).filter_map(|m| c.shifted(p, m, &s.x, &s.theta).ok()))
                }
            }
        }
    }
    let (mut worst_res, mut worst_lambda) = (0.0_f64, 0.0_f64);
    for c in &cuts {
        worst_res = worst_res.max(c.dual_residual(p));
        worst_lambda = worst_lambda.min(c.lambda.min());
    }
    Check {
        id: 4,
        name: "shifted certificates stay dual feasible",
        pass: !cuts.is_empty() && worst_res <= 1e-7 && worst_lambda >= -1e-9,
        detail: format!(
            "{} shifted cuts, max |Aᵀν + Cᵀλ| {worst_res:.2e}, min λ {worst_lambda:.2e}",
            cuts.len()
        ),
    }
}

fn monotonicity(traces: &Traces) -> Check {
    let mut bad = 0;
    let mut iterations = 0;
    for (lb, ub) in traces {
        iterations += lb.len();
        let decreasing = lb.windows(2).any(|w| w[1] < w[0] - 1e-9 * (1.0 + w[0].abs()));
        let crossed = lb.iter().zip(ub).any(|(l, u)| *u < l - 1e-9 * (1.0 + l.abs()));
        bad += usize::from(decreasing || crossed);
    }
    Check {
        id: 5,
        name: "bound monotonicity",
        pass: bad == 0 && iterations > 0,
        detail: format!("{} solves, {iterations} iterations, {bad} violations", traces.len()),
    }
}

fn contact_steps_within(report: &EpisodeReport, after: usize) -> (usize, usize) {
    let c: Vec<_> = report
        .records
        .iter()
        .filter(|r| r.contact_involved && r.step > after)
        .collect();
    (c.iter().filter(|r| r.iterations <= 5).count(), c.len())
}

fn subproblem_solves(report: &EpisodeReport) -> usize {
    report.records.iter().map(|r| r.lp_count + r.qp_count).sum()
}

fn push_traces(report: &EpisodeReport, traces: &mut Traces) {
    for (lb, ub) in report.lb_traces.iter().zip(&report.ub_traces) {
        traces.push((lb.clone(), ub.clone()));
    }
}

/// Criteria 6 to 8 on the first default-config seed whose closed loop stays
/// feasible for the whole episode.
fn warm_start_checks(traces: &mut Traces) -> Vec<Check> {
    let base = default_config();
    let p = base.model.problem().unwrap();
    let registry = SolverRegistry::default();
    let ctx = SolverContext {
        problem: &p,
        gbd: &base.gbd,
        warm_store: None,
    };
    let mut found = None;
    for seed in 0..40 {
        let cfg = SuiteConfig { seed, ..base.clone() };
        let mut warm = registry.create("gbd_warm", &ctx).unwrap();
        let report = simulate_episode(&cfg.episode(0), &p, warm.as_mut()).unwrap();
        push_traces(&report, traces);
        if !report.infeasible() {
            found = Some((seed, report));
            break;
        }
    }
    let Some((seed, warm)) = found else {
        let fail = |id, name| Check {
            id,
            name,
            pass: false,
            detail: "no feasible 200-step episode among seeds 0..40".into(),
        };
        return vec![
            fail(6, "continual-learning warm start"),
            fail(7, "cut-store saturation"),
            fail(8, "self-replay"),
        ];
    };

    let stream = instances(&warm);
    let mut cold_solver = registry.create("gbd_cold", &ctx).unwrap();
    let cold = replay(&stream, &p, cold_solver.as_mut(), base.model.dt);
    push_traces(&cold, traces);
    let (w5, wn) = contact_steps_within(&warm, 20);
    let share = w5 as f64 / wn.max(1) as f64;
    let (wm, wall) = contact_steps_within(&warm, 0);
    let (cm, call) = contact_steps_within(&cold, 0);
    let warm_mass = wm as f64 / wall.max(1) as f64;
    let cold_mass = cm as f64 / call.max(1) as f64;
    let (ws, cs) = (subproblem_solves(&warm), subproblem_solves(&cold));
    let all_solved = warm.records.iter().all(|r| r.status == StepStatus::Converged);
    let c6 = Check {
        id: 6,
        name: "continual-learning warm start",
        pass: wn > 0 && share >= 0.9 && ws < cs && warm_mass > cold_mass && all_solved,
        detail: format!(
            "seed {seed}: {w5}/{wn} contact steps after step 20 within 5 iterations ({:.1}%); LP+QP warm {ws} vs cold {cs}; mass at <=5 warm {:.3} vs cold {:.3}",
            100.0 * share,
            warm_mass,
            cold_mass
        ),
    };

    let cuts = |k: usize| warm.records[k].cuts_in_store;
    let n = warm.records.len();
    let (first, last) = (cuts(49), cuts(n - 1) - cuts(n - 51));
    let c7 = Check {
        id: 7,
        name: "cut-store saturation",
        pass: n >= 100 && last < first,
        detail: format!("cuts added in first 50 steps {first}, last 50 steps {last}, total {}", cuts(n - 1)),
    };

    let cfg = base.gbd.clone();
    let mut store = CutStore::new(&p);
    let (mut replays, mut one_iter, mut worst) = (0, 0, 0);
    for inst in &stream {
        solve_with_store(&mut store, &p, &inst.x_ini, &inst.theta, &cfg, None).unwrap();
        let mut again = store.clone();
        let r = solve_with_store(&mut again, &p, &inst.x_ini, &inst.theta, &cfg, None).unwrap();
        traces.push((r.stats.lb_trace, r.stats.ub_trace));
        replays += 1;
        if r.stats.iterations == 1 && r.status == GbdStatus::Converged {
            one_iter += 1;
        }
        worst = worst.max(r.stats.iterations);
    }
    let c8 = Check {
        id: 8,
        name: "self-replay",
        pass: one_iter == replays,
        detail: format!("{one_iter}/{replays} immediate re-solves converged in 1 iteration (max {worst})"),
    };
    vec![c6, c7, c8]
}

/// Lagrangian at the unconstrained minimiser `x⁰` for binaries `δ`.
fn lagrangian_form(
    p: &CondensedProblem,
    cut: &OptimalityCut,
    x: &DVector<f64>,
    theta: &DVector<f64>,
    delta: &DVector<f64>,
) -> f64 {
    let x0 = unconstrained_minimizer(&p.q, &p.a, &p.c, &cut.nu, &cut.lambda).unwrap();
    x0.dot(&(&p.q * &x0))
        + cut.nu.dot(&(&p.a * &x0 - p.b(x, delta)))
        + cut.lambda.dot(&(&p.c * &x0 - p.d(theta, delta)))
}

fn cut_forms(p: &CondensedProblem, solved: &[Solved]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut n, mut worst) = (0, 0.0_f64);
    'outer: for s in solved {
        for cut in s.store.optimality_cuts() {
            if n == 50 {
                break 'outer;
            }
            n += 1;
            for _ in 0..10 {
                let d = DVector::from_fn(p.n_bin(), |_, _| f64::from(u8::from(rng.random_bool(0.5))));
                let simple = cut.eval(&d);
                let full = lagrangian_form(p, cut, &s.x, &s.theta, &d);
                worst = worst.max((simple - full).abs());
            }
        }
    }
    Check {
        id: 9,
        name: "optimality-cut forms agree",
        pass: n == 50 && worst <= 1e-8,
        detail: format!("{n} cuts x 10 binaries, max difference {worst:.2e}"),
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for sub in ["reports", "histograms"] {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        out.append(&mut v);
    }
    out.push(dir.join("summary.json"));
    out.sort();
    out
}

fn determinism(traces: &mut Traces) -> Check {
    let cfg = default_config();
    let registry = SolverRegistry::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_suite(&cfg, a.path(), &registry, None).unwrap();
    run_suite(&cfg, b.path(), &registry, None).unwrap();
    for r in &ra.reports {
        push_traces(r, traces);
    }
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let mut differing = Vec::new();
    for (x, y) in fa.iter().zip(&fb) {
        if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
            differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let same_names = fa
        .iter()
        .map(|f| f.strip_prefix(a.path()).unwrap().to_path_buf())
        .eq(fb.iter().map(|f| f.strip_prefix(b.path()).unwrap().to_path_buf()));
    Check {
        id: 10,
        name: "determinism",
        pass: same_names && differing.is_empty() && !ra.reports.is_empty(),
        detail: format!(
            "{} files compared across two default runs, differing {differing:?}",
            fa.len()
        ),
    }
}

fn main() {
    let mut traces = Traces::new();
    let p = cartpole(4);
    let (c1, solved) = oracle_sweep(&p, &mut traces);
    let mut checks = vec![c1, farkas_alternatives(), cut_soundness(&p, &solved)];
    checks.push(shifted_dual_feasibility(&p, &solved));
    checks.extend(warm_start_checks(&mut traces));
    checks.push(cut_forms(&p, &solved));
    checks.push(determinism(&mut traces));
    checks.push(monotonicity(&traces));
    checks.sort_by_key(|c| c.id);

    let mut failed = 0;
    for c in &checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!c.pass);
        println!("{tag} [{:2}] {}: {}", c.id, c.name, c.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
