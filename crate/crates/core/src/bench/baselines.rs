//! Reference solvers for the full mixed-integer problem.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, Feasibility};
use crate::mld::CondensedProblem;
use crate::qp::{self, QpOutcome, QpProblem};

pub const BRUTE_FORCE_MAX_BINARIES: usize = 16;
/// Regularisation on the relaxed binaries, keeping the relaxed Hessian definite.
const RELAX_REG: f64 = 1e-6;
const INT_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct MiqpSolution {
    pub cost: f64,
    pub delta: DVector<f64>,
    pub plan: DVector<f64>,
    pub lp_count: usize,
    pub qp_count: usize,
    pub nodes: usize,
    /// Lower bound from the root relaxation (branch and bound only).
    pub root_bound: f64,
}

#[derive(Debug, Clone)]
pub enum MiqpOutcome {
    Optimal(MiqpSolution),
    AllInfeasible { lp_count: usize, qp_count: usize, nodes: usize },
}

/// LP screen then QP for one binary sequence; `None` when infeasible.
pub fn evaluate_delta(
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
    delta: &DVector<f64>,
    lp_count: &mut usize,
    qp_count: &mut usize,
) -> Result<Option<(f64, DVector<f64>)>> {
    *lp_count += 1;
    let Feasibility::Feasible { x } = lp::solve_feasibility(&problem.feasibility_lp(x_ini, theta, delta))?
    else {
        return Ok(None);
    };
    *qp_count += 1;
    match qp::solve_qp_from(&problem.subproblem(x_ini, theta, delta), Some(&x))? {
        QpOutcome::Optimal(s) => Ok(Some((s.f_star, s.x_star))),
        QpOutcome::Infeasible(_) => Ok(None),
    }
}

/// Exact optimum by enumerating every binary sequence.
pub fn brute_force_solve(
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<MiqpOutcome> {
    let n = problem.n_bin();
    if n > BRUTE_FORCE_MAX_BINARIES {
        return Err(Error::GuardExceeded(n, BRUTE_FORCE_MAX_BINARIES));
    }
    let (mut lp_count, mut qp_count) = (0, 0);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for bits in 0u32..(1 << n) {
        let delta = DVector::from_fn(n, |j, _| ((bits >> j) & 1) as f64);
        if let Some((f, x)) = evaluate_delta(problem, x_ini, theta, &delta, &mut lp_count, &mut qp_count)? {
            if best.as_ref().is_none_or(|(b, _, _)| f < *b) {
                best = Some((f, delta, x));
            }
        }
    }
    let nodes = 1 << n;
    Ok(match best {
        Some((cost, delta, plan)) => MiqpOutcome::Optimal(MiqpSolution {
            cost,
            delta,
            plan,
            lp_count,
            qp_count,
            nodes,
            root_bound: cost,
        }),
        None => MiqpOutcome::AllInfeasible {
            lp_count,
            qp_count,
            nodes,
        },
    })
}

struct Relaxation {
    q: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    c_in: DMatrix<f64>,
    d_in: DVector<f64>,
    n_x: usize,
    n_bin: usize,
}

impl Relaxation {
    /// Variables `[x; δ]`: `A x − B_δ δ = B_x x_ini`,
    /// `C x − D_δ δ ≤ d0 + D_θ θ`, `0 ≤ δ ≤ 1`.
    fn new(p: &CondensedProblem, x_ini: &DVector<f64>, theta: &DVector<f64>) -> Self {
        let (nv, nb) = (p.n_vars(), p.n_bin());
        let n = nv + nb;
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (nv, nv)).copy_from(&p.q);
        for j in 0..nb {
            q[(nv + j, nv + j)] = RELAX_REG;
        }
        let mut a_eq = DMatrix::zeros(p.a.nrows(), n);
        a_eq.view_mut((0, 0), p.a.shape()).copy_from(&p.a);
        a_eq.view_mut((0, nv), p.b_delta.shape()).copy_from(&(-&p.b_delta));
        let b_eq = &p.b_x * x_ini;
        let mc = p.c.nrows();
        let mut c_in = DMatrix::zeros(mc + 2 * nb, n);
        c_in.view_mut((0, 0), p.c.shape()).copy_from(&p.c);
        c_in.view_mut((0, nv), p.d_delta.shape()).copy_from(&(-&p.d_delta));
        let mut d_in = DVector::zeros(mc + 2 * nb);
        d_in.rows_mut(0, mc).copy_from(&(&p.d0 + &p.d_theta * theta));
        for j in 0..nb {
            c_in[(mc + 2 * j, nv + j)] = 1.0;
            d_in[mc + 2 * j] = 1.0;
            c_in[(mc + 2 * j + 1, nv + j)] = -1.0;
        }
        Self {
            q,
            a_eq,
            b_eq,
            c_in,
            d_in,
            n_x: nv,
            n_bin: nb,
        }
    }

    fn problem(&self, fixings: &[(usize, bool)]) -> QpProblem {
        let mc = self.c_in.nrows() - 2 * self.n_bin;
        let mut d_in = self.d_in.clone();
        for &(j, one) in fixings {
            if one {
                d_in[mc + 2 * j + 1] = -1.0;
            } else {
                d_in[mc + 2 * j] = 0.0;
            }
        }
        QpProblem {
            q: self.q.clone(),
            a_eq: self.a_eq.clone(),
            b_eq: self.b_eq.clone(),
            c_in: self.c_in.clone(),
            d_in,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.seq.cmp(&self.seq))
    }
}

/// Plain best-first branch and bound over QP relaxations. Stops when every
/// open node's bound is within `gap_tol` (relative) of the incumbent.
pub fn baseline_bnb_miqp(
    problem: &CondensedProblem,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
    warm_delta: Option<&DVector<f64>>,
    gap_tol: f64,
    node_cap: usize,
) -> Result<MiqpOutcome> {
    let n = problem.n_bin();
    let relax = Relaxation::new(problem, x_ini, theta);
    let (mut lp_count, mut qp_count) = (0, 0);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;

    if let Some(w) = warm_delta.filter(|w| w.len() == n) {
        let w = w.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        if let Some((f, x)) = evaluate_delta(problem, x_ini, theta, &w, &mut lp_count, &mut qp_count)? {
            best = Some((f, w, x));
        }
    }
    let prune = |bound: f64, best: &Option<(f64, DVector<f64>, DVector<f64>)>| {
        best.as_ref()
            .is_some_and(|(ub, _, _)| bound >= (1.0 - gap_tol) * ub - 1e-12)
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
        fixings: Vec::new(),
    });
    let (mut seq, mut nodes) = (0, 0);
    let mut root_bound = f64::NEG_INFINITY;
    while let Some(node) = heap.pop() {
        if prune(node.bound, &best) {
            continue;
        }
        nodes += 1;
        if nodes > node_cap {
            return Err(Error::IterationCapExceeded(node_cap));
        }
        qp_count += 1;
        let sol = match qp::solve_qp(&relax.problem(&node.fixings))? {
            QpOutcome::Infeasible(_) => continue,
            QpOutcome::Optimal(s) => s,
        };
        let bound = (sol.f_star - RELAX_REG * n as f64).max(node.bound).max(0.0);
        if node.depth == 0 {
            root_bound = bound;
        }
        if prune(bound, &best) {
            continue;
        }
        let d = sol.x_star.rows(relax.n_x, n).into_owned();
        let mut branch: Option<(usize, f64)> = None;
        for j in 0..n {
            let frac = (d[j] - d[j].round()).abs();
            if frac > INT_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((j, frac));
            }
        }
        let Some((j, _)) = branch else {
            let delta = d.map(|v| v.round());
            if let Some((f, x)) =
                evaluate_delta(problem, x_ini, theta, &delta, &mut lp_count, &mut qp_count)?
            {
                if best.as_ref().is_none_or(|(b, _, _)| f < *b) {
                    best = Some((f, delta, x));
                }
            }
            continue;
        };
        for one in [d[j] >= 0.5, d[j] < 0.5] {
            seq += 1;
            let mut fixings = node.fixings.clone();
            fixings.push((j, one));
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                seq,
                fixings,
            });
        }
    }
    Ok(match best {
        Some((cost, delta, plan)) => MiqpOutcome::Optimal(MiqpSolution {
            cost,
            delta,
            plan,
            lp_count,
            qp_count,
            nodes,
            root_bound,
        }),
        None => MiqpOutcome::AllInfeasible {
            lp_count,
            qp_count,
            nodes,
        },
    })
}
