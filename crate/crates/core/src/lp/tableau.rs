//! Compact exchange tableau for `min cᵀz  s.t.  G z ≤ e`, `z` free.
//!
//! Only nonbasic columns are stored, so a pivot costs `rows × cols` where
//! `cols` is the number of structural variables. Slack `s_i` pairs with row
//! `i` of `G`. Row `r` of the tableau reads `basic_r = β_r − Σ_c α_rc·nb_c`
//! and the objective is `obj = const + Σ_c γ_c·nb_c`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Primal feasibility threshold on basic slacks inside the kernel.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost threshold for the primal simplex.
pub const DUAL_TOL: f64 = 1e-9;
const PIVOT_REL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    Struct(usize),
    Slack(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualOutcome {
    Feasible,
    /// Basic slack row with no eligible entering column.
    Infeasible(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalOutcome {
    Optimal,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct Tableau {
    rows: usize,
    cols: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    basic: Vec<Var>,
    nonbasic: Vec<Var>,
    g: DMatrix<f64>,
    e: DVector<f64>,
    cost: DVector<f64>,
    pivots: usize,
    steep_limit: usize,
    cap: usize,
}

impl Tableau {
    pub fn new(g: DMatrix<f64>, e: DVector<f64>, cost: DVector<f64>) -> Self {
        let (rows, cols) = g.shape();
        let mut alpha = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                alpha[r * cols + c] = g[(r, c)];
            }
        }
        let size = rows + cols;
        Self {
            rows,
            cols,
            alpha,
            beta: e.iter().copied().collect(),
            gamma: cost.iter().copied().collect(),
            basic: (0..rows).map(Var::Slack).collect(),
            nonbasic: (0..cols).map(Var::Struct).collect(),
            g,
            e,
            cost,
            pivots: 0,
            steep_limit: 10 * size.max(1),
            cap: 50 * size.max(1),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn pivot_count(&self) -> usize {
        self.pivots
    }

    /// Resets the pivot budget, used when a solved tableau is reused.
    pub fn reset_budget(&mut self) {
        self.pivots = 0;
    }

    #[inline]
    fn a(&self, r: usize, c: usize) -> f64 {
        self.alpha[r * self.cols + c]
    }

    fn row_max(&self, r: usize) -> f64 {
        self.alpha[r * self.cols..(r + 1) * self.cols]
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let p = self.a(r, c);
        let inv = 1.0 / p;
        {
            let row = &mut self.alpha[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[c] = inv;
        }
        self.beta[r] *= inv;
        let pivot_row: Vec<f64> = self.alpha[r * cols..(r + 1) * cols].to_vec();
        let beta_r = self.beta[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.alpha[i * cols + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.alpha[i * cols..(i + 1) * cols];
            for (k, v) in row.iter_mut().enumerate() {
                *v -= f * pivot_row[k];
            }
            row[c] = -f * inv;
            self.beta[i] -= f * beta_r;
        }
        let gc = self.gamma[c];
        if gc != 0.0 {
            for (k, v) in self.gamma.iter_mut().enumerate() {
                *v -= gc * pivot_row[k];
            }
            self.gamma[c] = -gc * inv;
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
        self.pivots += 1;
    }

    fn check_budget(&self) -> Result<()> {
        if self.pivots >= self.cap {
            return Err(Error::NumericalFailure(format!(
                "simplex stalled after {} pivots",
                self.pivots
            )));
        }
        Ok(())
    }

    /// Dual simplex from a dual-feasible basis. With zero costs this is a
    /// pure feasibility search whose failure row is a Farkas certificate.
    pub fn dual_simplex(&mut self) -> Result<DualOutcome> {
        loop {
            self.check_budget()?;
            let bland = self.pivots >= self.steep_limit;

            let mut leave: Option<usize> = None;
            let mut best = 0.0;
            for r in 0..self.rows {
                if !matches!(self.basic[r], Var::Slack(_)) || self.beta[r] >= -FEAS_TOL {
                    continue;
                }
                if bland {
                    if leave.is_none_or(|l| self.basic[r] < self.basic[l]) {
                        leave = Some(r);
                    }
                } else {
                    let norm: f64 = 1.0
                        + self.alpha[r * self.cols..(r + 1) * self.cols]
                            .iter()
                            .map(|x| x * x)
                            .sum::<f64>();
                    let score = self.beta[r] * self.beta[r] / norm;
                    if score > best {
                        best = score;
                        leave = Some(r);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(DualOutcome::Feasible);
            };

            let ptol = PIVOT_REL * self.row_max(r).max(1.0);
            let mut enter: Option<(usize, f64)> = None;
            for c in 0..self.cols {
                let a = self.a(r, c);
                let ratio = match self.nonbasic[c] {
                    Var::Struct(_) if a.abs() > ptol => self.gamma[c].abs() / a.abs(),
                    Var::Slack(_) if a < -ptol => self.gamma[c].max(0.0) / -a,
                    _ => continue,
                };
                enter = match enter {
                    None => Some((c, ratio)),
                    Some((bc, br)) => {
                        if ratio < br - TIE_TOL {
                            Some((c, ratio))
                        } else if ratio <= br + TIE_TOL {
                            let better = if bland {
                                self.nonbasic[c] < self.nonbasic[bc]
                            } else {
                                a.abs() > self.a(r, bc).abs()
                            };
                            if better {
                                Some((c, ratio))
                            } else {
                                Some((bc, br))
                            }
                        } else {
                            Some((bc, br))
                        }
                    }
                };
            }
            match enter {
                None => return Ok(DualOutcome::Infeasible(r)),
                Some((c, _)) => self.pivot(r, c),
            }
        }
    }

    /// Primal simplex from a primal-feasible basis.
    pub fn primal_simplex(&mut self) -> Result<PrimalOutcome> {
        loop {
            self.check_budget()?;
            let bland = self.pivots >= self.steep_limit;

            let mut enter: Option<usize> = None;
            let mut best = 0.0;
            for c in 0..self.cols {
                let g = self.gamma[c];
                let score = match self.nonbasic[c] {
                    Var::Struct(_) if g.abs() > DUAL_TOL => g.abs(),
                    Var::Slack(_) if g < -DUAL_TOL => -g,
                    _ => continue,
                };
                if bland {
                    if enter.is_none_or(|e| self.nonbasic[c] < self.nonbasic[e]) {
                        enter = Some(c);
                    }
                } else if score > best {
                    best = score;
                    enter = Some(c);
                }
            }
            let Some(c) = enter else {
                return Ok(PrimalOutcome::Optimal);
            };
            let dir = match self.nonbasic[c] {
                Var::Struct(_) => -self.gamma[c].signum(),
                Var::Slack(_) => 1.0,
            };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                if !matches!(self.basic[r], Var::Slack(_)) {
                    continue;
                }
                let a = self.a(r, c) * dir;
                let ptol = PIVOT_REL * self.row_max(r).max(1.0);
                if a <= ptol {
                    continue;
                }
                let t = self.beta[r].max(0.0) / a;
                leave = match leave {
                    None => Some((r, t)),
                    Some((br, bt)) => {
                        if t < bt - TIE_TOL {
                            Some((r, t))
                        } else if t <= bt + TIE_TOL {
                            let better = if bland {
                                self.basic[r] < self.basic[br]
                            } else {
                                a.abs() > self.a(br, c).abs()
                            };
                            if better {
                                Some((r, t))
                            } else {
                                Some((br, bt))
                            }
                        } else {
                            Some((br, bt))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(PrimalOutcome::Unbounded),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }

    /// Installs new structural costs and recomputes reduced costs.
    pub fn set_costs(&mut self, cost: DVector<f64>) {
        let mut gamma = vec![0.0; self.cols];
        for (c, v) in self.nonbasic.iter().enumerate() {
            if let Var::Struct(j) = *v {
                gamma[c] = cost[j];
            }
        }
        for r in 0..self.rows {
            if let Var::Struct(j) = self.basic[r] {
                let cj = cost[j];
                if cj != 0.0 {
                    for (c, g) in gamma.iter_mut().enumerate() {
                        *g -= cj * self.alpha[r * self.cols + c];
                    }
                }
            }
        }
        self.gamma = gamma;
        self.cost = cost;
    }

    /// Adds `delta` to the right-hand side of constraint row `i`.
    pub fn shift_rhs(&mut self, i: usize, delta: f64) {
        self.e[i] += delta;
        if let Some(r) = self.basic.iter().position(|v| *v == Var::Slack(i)) {
            self.beta[r] += delta;
        } else if let Some(c) = self.nonbasic.iter().position(|v| *v == Var::Slack(i)) {
            for r in 0..self.rows {
                self.beta[r] += delta * self.alpha[r * self.cols + c];
            }
        }
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.e
    }

    /// Basis split used by the refinement solves: nonbasic slack rows and
    /// basic structural columns. The two sets always have equal size.
    fn refinement_sets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut ns: Vec<usize> = self
            .nonbasic
            .iter()
            .filter_map(|v| match v {
                Var::Slack(i) => Some(*i),
                _ => None,
            })
            .collect();
        let mut bz: Vec<usize> = self
            .basic
            .iter()
            .filter_map(|v| match v {
                Var::Struct(j) => Some(*j),
                _ => None,
            })
            .collect();
        ns.sort_unstable();
        bz.sort_unstable();
        (ns, bz)
    }

    fn refinement_matrix(&self, ns: &[usize], bz: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(ns.len(), bz.len(), |i, j| self.g[(ns[i], bz[j])])
    }

    /// Current vertex, recomputed from the active rows instead of the
    /// accumulated tableau.
    pub fn point(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.cols);
        let (ns, bz) = self.refinement_sets();
        let from_tableau = |z: &mut DVector<f64>| {
            for (r, v) in self.basic.iter().enumerate() {
                if let Var::Struct(j) = *v {
                    z[j] = self.beta[r];
                }
            }
        };
        if bz.is_empty() {
            return z;
        }
        let m = self.refinement_matrix(&ns, &bz);
        let rhs = DVector::from_iterator(ns.len(), ns.iter().map(|&i| self.e[i]));
        match m.lu().solve(&rhs) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) => {
                for (k, &j) in bz.iter().enumerate() {
                    z[j] = sol[k];
                }
            }
            _ => from_tableau(&mut z),
        }
        z
    }

    /// Row multipliers `μ ≥ 0` with `c + Gᵀμ = 0` on the current basis.
    pub fn row_duals(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.rows);
        let (ns, bz) = self.refinement_sets();
        let tableau_mu = |mu: &mut DVector<f64>| {
            for (c, v) in self.nonbasic.iter().enumerate() {
                if let Var::Slack(i) = *v {
                    mu[i] = self.gamma[c].max(0.0);
                }
            }
        };
        if ns.is_empty() {
            return mu;
        }
        let m = self.refinement_matrix(&ns, &bz);
        let rhs = -DVector::from_iterator(bz.len(), bz.iter().map(|&j| self.cost[j]));
        match m.transpose().lu().solve(&rhs) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) => {
                for (k, &i) in ns.iter().enumerate() {
                    mu[i] = sol[k].max(0.0);
                }
            }
            _ => tableau_mu(&mut mu),
        }
        mu
    }

    /// Farkas multipliers read from the failing row `r` of the dual simplex:
    /// `y ≥ 0`, `Gᵀy ≈ 0`, `eᵀy < 0`.
    pub fn farkas_row(&self, r: usize) -> DVector<f64> {
        let mut y = DVector::zeros(self.rows);
        let Var::Slack(leaving) = self.basic[r] else {
            unreachable!("infeasible rows are always slack rows");
        };
        y[leaving] = 1.0;
        let (ns, bz) = self.refinement_sets();
        let tableau_y = |y: &mut DVector<f64>| {
            for (c, v) in self.nonbasic.iter().enumerate() {
                if let Var::Slack(i) = *v {
                    y[i] = self.a(r, c).max(0.0);
                }
            }
        };
        if ns.is_empty() {
            return y;
        }
        let m = self.refinement_matrix(&ns, &bz);
        let rhs = -DVector::from_iterator(bz.len(), bz.iter().map(|&j| self.g[(leaving, j)]));
        match m.transpose().lu().solve(&rhs) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) => {
                for (k, &i) in ns.iter().enumerate() {
                    y[i] = sol[k].max(0.0);
                }
            }
            _ => tableau_y(&mut y),
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_then_optimum() {
        // min -x - y  s.t. x + y ≤ 2, x ≤ 1.5, -x ≤ 0, -y ≤ 0
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 0.0, -1.0, 0.0, 0.0, -1.0]);
        let e = DVector::from_vec(vec![2.0, 1.5, 0.0, 0.0]);
        let mut t = Tableau::new(g, e, DVector::zeros(2));
        assert_eq!(t.dual_simplex().unwrap(), DualOutcome::Feasible);
        t.set_costs(DVector::from_vec(vec![-1.0, -1.0]));
        assert_eq!(t.primal_simplex().unwrap(), PrimalOutcome::Optimal);
        let z = t.point();
        assert!((z[0] + z[1] - 2.0).abs() < 1e-12);
        let mu = t.row_duals();
        assert!((mu[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_row_gives_certificate() {
        // x ≤ -1 and -x ≤ -1 (x ≥ 1)
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let e = DVector::from_vec(vec![-1.0, -1.0]);
        let mut t = Tableau::new(g.clone(), e.clone(), DVector::zeros(1));
        let DualOutcome::Infeasible(r) = t.dual_simplex().unwrap() else {
            panic!("expected infeasible");
        };
        let y = t.farkas_row(r);
        assert!(y.iter().all(|v| *v >= 0.0));
        assert!((g.transpose() * &y).amax() < 1e-12);
        assert!(e.dot(&y) < 0.0);
    }
}
