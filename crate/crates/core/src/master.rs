//! Benders master problem: choose binaries `δ` minimising the epigraph
//! variable `z0 ≥ 0` over all stored optimality cuts, subject to the
//! feasibility cuts. Solved to global optimality by best-first branch and
//! bound on LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use crate::cuts::{AffineCut, CutStore};
use crate::error::{Error, Result};
use crate::lp::{DualOutcome, PrimalOutcome, Tableau};

pub const DEFAULT_NODE_CAP: usize = 1_000_000;
/// Slack allowed on feasibility cuts for an integer point.
pub const CUT_TOL: f64 = 1e-7;
const INT_TOL: f64 = 1e-7;
const PRUNE_TOL: f64 = 1e-9;

/// Cuts in affine form at the current parameters.
#[derive(Debug, Clone)]
pub struct MasterProblem {
    /// `coef·δ + offset ≥ 0`.
    pub feas: Vec<AffineCut>,
    /// `z0 ≥ coef·δ + offset`.
    pub opt: Vec<AffineCut>,
    pub n_bin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub delta: DVector<f64>,
    /// Exact objective at `delta`: the largest optimality cut, floored at 0.
    pub z0: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterOutcome {
    Solved(MasterSolution),
    Infeasible,
}

impl CutStore {
    pub fn master_problem(&self) -> MasterProblem {
        MasterProblem {
            feas: self.feasibility_cuts().iter().map(|c| c.affine.clone()).collect(),
            opt: self.optimality_cuts().iter().map(|c| c.affine.clone()).collect(),
            n_bin: self.shape().horizon * self.shape().n_delta,
        }
    }
}

impl MasterProblem {
    pub fn empty(n_bin: usize) -> Self {
        Self {
            feas: Vec::new(),
            opt: Vec::new(),
            n_bin,
        }
    }

    /// `Some(z0)` when `delta` satisfies every feasibility cut.
    pub fn evaluate(&self, delta: &DVector<f64>) -> Option<f64> {
        if self.feas.iter().any(|c| c.eval(delta) < -CUT_TOL) {
            return None;
        }
        Some(self.opt.iter().map(|c| c.eval(delta)).fold(0.0, f64::max))
    }

    fn validate(&self) -> Result<()> {
        let bad = self
            .feas
            .iter()
            .chain(self.opt.iter())
            .any(|c| c.coef.len() != self.n_bin);
        if bad {
            return Err(Error::DimensionMismatch("cut length differs from n_bin".into()));
        }
        let finite = self
            .feas
            .iter()
            .chain(self.opt.iter())
            .all(|c| c.offset.is_finite() && c.coef.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite("master cuts"));
        }
        Ok(())
    }

    /// Rows `G [δ; z0] ≤ e`: feasibility cuts, optimality cuts, `δ ≤ 1`,
    /// `−δ ≤ 0`, `−z0 ≤ 0`.
    fn relaxation(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_bin;
        let rows = self.feas.len() + self.opt.len() + 2 * n + 1;
        let mut g = DMatrix::zeros(rows, n + 1);
        let mut e = DVector::zeros(rows);
        let mut r = 0;
        for c in &self.feas {
            for j in 0..n {
                g[(r, j)] = -c.coef[j];
            }
            e[r] = c.offset;
            r += 1;
        }
        for c in &self.opt {
            for j in 0..n {
                g[(r, j)] = c.coef[j];
            }
            g[(r, n)] = -1.0;
            e[r] = -c.offset;
            r += 1;
        }
        for j in 0..n {
            g[(r, j)] = 1.0;
            e[r] = 1.0;
            g[(r + 1, j)] = -1.0;
            r += 2;
        }
        g[(r, n)] = -1.0;
        (g, e)
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    /// `(index, value)` pairs.
    fixings: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the "greatest" node is the lowest bound, then the deepest,
    // then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    delta: Option<DVector<f64>>,
    value: f64,
}

impl Incumbent {
    fn offer(&mut self, mp: &MasterProblem, delta: DVector<f64>) {
        if let Some(v) = mp.evaluate(&delta) {
            if v < self.value - 1e-12 {
                self.value = v;
                self.delta = Some(delta);
            }
        }
    }
}

fn round(x: &DVector<f64>, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| if x[j] >= 0.5 { 1.0 } else { 0.0 })
}

/// LP relaxation at a node, from a clone of the solved root tableau.
fn node_lp(root: &Tableau, n: usize, fixings: &[(usize, bool)]) -> Result<Option<DVector<f64>>> {
    let mut t = root.clone();
    t.reset_budget();
    let feas_rows = t.rows() - 2 * n - 1;
    for &(j, one) in fixings {
        if one {
            // −δ_j ≤ −1
            t.shift_rhs(feas_rows + 2 * j + 1, -1.0);
        } else {
            // δ_j ≤ 0
            t.shift_rhs(feas_rows + 2 * j, -1.0);
        }
    }
    match t.dual_simplex()? {
        DualOutcome::Infeasible(_) => Ok(None),
        DualOutcome::Feasible => Ok(Some(t.point())),
    }
}

/// Globally optimal `δ` for `mp`. `warm` seeds the incumbent.
pub fn solve_master(
    mp: &MasterProblem,
    warm: Option<&DVector<f64>>,
    node_cap: usize,
) -> Result<MasterOutcome> {
    mp.validate()?;
    let n = mp.n_bin;
    let mut inc = Incumbent {
        delta: None,
        value: f64::INFINITY,
    };
    if let Some(w) = warm.filter(|w| w.len() == n) {
        inc.offer(mp, round(w, n));
    }

    let (g, e) = mp.relaxation();
    let mut root = Tableau::new(g, e, DVector::zeros(n + 1));
    if let DualOutcome::Infeasible(_) = root.dual_simplex()? {
        return Ok(match inc.delta {
            Some(delta) => MasterOutcome::Solved(MasterSolution {
                delta,
                z0: inc.value,
                nodes: 1,
            }),
            None => MasterOutcome::Infeasible,
        });
    }
    let mut cost = DVector::zeros(n + 1);
    cost[n] = 1.0;
    root.set_costs(cost);
    root.reset_budget();
    if root.primal_simplex()? == PrimalOutcome::Unbounded {
        return Err(Error::NumericalFailure("master relaxation unbounded".into()));
    }
    root.reset_budget();

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        fixings: Vec::new(),
    });
    let mut nodes = 0;
    while let Some(node) = heap.pop() {
        if node.bound >= inc.value - PRUNE_TOL {
            continue;
        }
        nodes += 1;
        if nodes > node_cap {
            return Err(Error::IterationCapExceeded(node_cap));
        }
        let Some(x) = node_lp(&root, n, &node.fixings)? else {
            continue;
        };
        let bound = x[n].max(0.0).max(node.bound);
        if bound >= inc.value - PRUNE_TOL {
            continue;
        }
        inc.offer(mp, round(&x, n));

        let mut branch: Option<(usize, f64)> = None;
        for j in 0..n {
            let frac = (x[j] - x[j].round()).abs();
            if frac > INT_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((j, frac));
            }
        }
        let Some((j, _)) = branch else {
            // Integral relaxation: its rounding was just offered. Rounding can
            // lose the point only through the feasibility tolerance, in which
            // case the node is exhausted anyway.
            continue;
        };
        if bound >= inc.value - PRUNE_TOL {
            continue;
        }
        for one in [x[j] >= 0.5, x[j] < 0.5] {
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

    Ok(match inc.delta {
        Some(delta) => MasterOutcome::Solved(MasterSolution {
            delta,
            z0: inc.value,
            nodes,
        }),
        None => MasterOutcome::Infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enumerate(mp: &MasterProblem) -> Option<f64> {
        let n = mp.n_bin;
        (0..1u32 << n)
            .filter_map(|bits| {
                let d = DVector::from_fn(n, |j, _| ((bits >> j) & 1) as f64);
                mp.evaluate(&d)
            })
            .min_by(f64::total_cmp)
    }

    fn random_master(rng: &mut ChaCha8Rng, n: usize, nf: usize, no: usize) -> MasterProblem {
        let mut cut = |scale: f64| AffineCut {
            coef: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0) * scale),
            offset: rng.random_range(-0.5..1.5) * scale,
        };
        MasterProblem {
            feas: (0..nf).map(|_| cut(1.0)).collect(),
            opt: (0..no).map(|_| cut(3.0)).collect(),
            n_bin: n,
        }
    }

    #[test]
    fn empty_store_gives_zero() {
        let mp = MasterProblem::empty(6);
        let MasterOutcome::Solved(s) = solve_master(&mp, None, DEFAULT_NODE_CAP).unwrap() else {
            panic!()
        };
        assert_eq!(s.delta, DVector::zeros(6));
        assert_eq!(s.z0, 0.0);
    }

    #[test]
    fn single_exclusion_cut() {
        let mut mp = MasterProblem::empty(4);
        let mut coef = DVector::zeros(4);
        coef[0] = -1.0;
        mp.feas.push(AffineCut { coef, offset: 0.0 });
        let mut c = DVector::from_element(4, -1.0);
        c[1] = 1.0;
        mp.opt.push(AffineCut { coef: c, offset: 2.0 });
        let MasterOutcome::Solved(s) = solve_master(&mp, None, DEFAULT_NODE_CAP).unwrap() else {
            panic!()
        };
        assert_eq!(s.delta[0], 0.0);
        assert_eq!(s.delta[1], 0.0);
        assert!((s.z0 - 0.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_when_every_point_is_cut() {
        let mut mp = MasterProblem::empty(2);
        mp.feas.push(AffineCut {
            coef: DVector::from_element(2, 1.0),
            offset: -3.0,
        });
        assert_eq!(
            solve_master(&mp, None, DEFAULT_NODE_CAP).unwrap(),
            MasterOutcome::Infeasible
        );
    }

    #[test]
    fn matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let n = 2 + trial % 9;
            let mp = random_master(&mut rng, n, trial % 5, 1 + trial % 7);
            let got = solve_master(&mp, None, DEFAULT_NODE_CAP).unwrap();
            match (enumerate(&mp), got) {
                (None, MasterOutcome::Infeasible) => {}
                (Some(v), MasterOutcome::Solved(s)) => {
                    assert!((s.z0 - v).abs() <= 1e-9, "trial {trial}: {} vs {v}", s.z0);
                    assert_eq!(mp.evaluate(&s.delta), Some(s.z0));
                }
                (e, g) => panic!("trial {trial}: enumeration {e:?}, master {g:?}"),
            }
        }
    }

    #[test]
    fn warm_seed_does_not_change_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mp = random_master(&mut rng, 8, 2, 5);
            let warm = DVector::from_fn(8, |j, _| (j % 2) as f64);
            let a = solve_master(&mp, None, DEFAULT_NODE_CAP).unwrap();
            let b = solve_master(&mp, Some(&warm), DEFAULT_NODE_CAP).unwrap();
            match (a, b) {
                (MasterOutcome::Solved(a), MasterOutcome::Solved(b)) => {
                    assert!((a.z0 - b.z0).abs() <= 1e-9)
                }
                (a, b) => assert_eq!(a, b),
            }
        }
    }
}
