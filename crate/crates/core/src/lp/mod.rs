//! Dense linear programming with Farkas infeasibility certificates.
//!
//! Equalities are eliminated up front; what remains is an inequality system
//! over free variables solved on a compact exchange tableau. Feasibility is
//! decided by a zero-cost dual simplex whose failing row is the certificate,
//! then a primal simplex optimizes when an objective is present.

mod tableau;

pub use tableau::{DualOutcome, PrimalOutcome, Tableau};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, inf_norm, EqualityElimination};

/// Primal and dual feasibility tolerance reported to callers.
pub const LP_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c_in: DMatrix<f64>,
    pub d_in: DVector<f64>,
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
}

impl LpProblem {
    /// Pure feasibility problem (zero objective, no bounds).
    pub fn feasibility(
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        c_in: DMatrix<f64>,
        d_in: DVector<f64>,
    ) -> Self {
        let n = a_eq.ncols().max(c_in.ncols());
        let a_eq = if a_eq.nrows() == 0 { DMatrix::zeros(0, n) } else { a_eq };
        let c_in = if c_in.nrows() == 0 { DMatrix::zeros(0, n) } else { c_in };
        Self {
            c: DVector::zeros(n),
            a_eq,
            b_eq,
            c_in,
            d_in,
            lower: None,
            upper: None,
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a_eq.ncols() != n || self.c_in.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "columns: c={}, A_eq={}, C_in={}",
                n,
                self.a_eq.ncols(),
                self.c_in.ncols()
            )));
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.c_in.nrows() != self.d_in.len() {
            return Err(Error::DimensionMismatch("row counts of constraint blocks".into()));
        }
        for bound in [&self.lower, &self.upper].into_iter().flatten() {
            if bound.len() != n {
                return Err(Error::DimensionMismatch("bound vector length".into()));
            }
        }
        if !all_finite_vec(&self.c)
            || !all_finite_mat(&self.a_eq)
            || !all_finite_vec(&self.b_eq)
            || !all_finite_mat(&self.c_in)
            || !all_finite_vec(&self.d_in)
        {
            return Err(Error::NonFinite("LP data"));
        }
        Ok(())
    }
}

/// Dual ray proving `{A_eq x = b_eq, C_in x ≤ d_in, lo ≤ x ≤ hi}` empty.
///
/// `lambda_lower`/`lambda_upper` pair with the bound rows `−x ≤ −lo` and
/// `x ≤ hi`; they are zero-length when the problem has no bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub lambda_lower: DVector<f64>,
    pub lambda_upper: DVector<f64>,
}

impl FarkasCertificate {
    pub fn scale(&self) -> f64 {
        [&self.nu, &self.lambda, &self.lambda_lower, &self.lambda_upper]
            .into_iter()
            .map(inf_norm)
            .fold(0.0, f64::max)
    }

    pub fn normalized(mut self) -> Self {
        let s = self.scale();
        if s > 0.0 {
            self.nu /= s;
            self.lambda /= s;
            self.lambda_lower /= s;
            self.lambda_upper /= s;
        }
        self
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            nu: &self.nu * a,
            lambda: &self.lambda * a,
            lambda_lower: &self.lambda_lower * a,
            lambda_upper: &self.lambda_upper * a,
        }
    }

    /// `A_eqᵀν + C_inᵀλ − λ_lo + λ_hi`.
    pub fn dual_residual(&self, p: &LpProblem) -> DVector<f64> {
        let mut r = p.a_eq.transpose() * &self.nu + p.c_in.transpose() * &self.lambda;
        if self.lambda_lower.len() == r.len() {
            r -= &self.lambda_lower;
        }
        if self.lambda_upper.len() == r.len() {
            r += &self.lambda_upper;
        }
        r
    }

    /// `b_eqᵀν + d_inᵀλ − loᵀλ_lo + hiᵀλ_hi`; negative for a valid certificate.
    pub fn value(&self, p: &LpProblem) -> f64 {
        let mut v = p.b_eq.dot(&self.nu) + p.d_in.dot(&self.lambda);
        if let Some(lo) = &p.lower {
            if self.lambda_lower.len() == lo.len() {
                v -= lo
                    .iter()
                    .zip(self.lambda_lower.iter())
                    .filter(|(l, _)| l.is_finite())
                    .map(|(l, y)| l * y)
                    .sum::<f64>();
            }
        }
        if let Some(hi) = &p.upper {
            if self.lambda_upper.len() == hi.len() {
                v += hi
                    .iter()
                    .zip(self.lambda_upper.iter())
                    .filter(|(h, _)| h.is_finite())
                    .map(|(h, y)| h * y)
                    .sum::<f64>();
            }
        }
        v
    }

    /// Checks the three certificate conditions against `p`.
    pub fn is_valid_for(&self, p: &LpProblem) -> bool {
        let nonneg = [&self.lambda, &self.lambda_lower, &self.lambda_upper]
            .into_iter()
            .all(|v| v.iter().all(|x| *x >= -1e-9));
        let s = self.scale().max(f64::MIN_POSITIVE);
        nonneg && inf_norm(&self.dual_residual(p)) / s <= LP_TOL && self.value(p) < 0.0
    }
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible { x: DVector<f64> },
    Infeasible { cert: FarkasCertificate },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

#[derive(Debug, Clone)]
pub struct LpDuals {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub duals: LpDuals,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(FarkasCertificate),
    Unbounded,
}

/// Inequality rows after folding finite bounds in: `C_in` rows first, then
/// `−x_j ≤ −lo_j`, then `x_j ≤ hi_j`.
struct Stacked {
    c: DMatrix<f64>,
    d: DVector<f64>,
    n_in: usize,
    lower_idx: Vec<usize>,
    upper_idx: Vec<usize>,
}

fn stack_rows(p: &LpProblem) -> Stacked {
    let n = p.n();
    let lower_idx: Vec<usize> = p
        .lower
        .as_ref()
        .map(|lo| (0..n).filter(|&j| lo[j].is_finite()).collect())
        .unwrap_or_default();
    let upper_idx: Vec<usize> = p
        .upper
        .as_ref()
        .map(|hi| (0..n).filter(|&j| hi[j].is_finite()).collect())
        .unwrap_or_default();
    let n_in = p.c_in.nrows();
    let rows = n_in + lower_idx.len() + upper_idx.len();
    let mut c = DMatrix::zeros(rows, n);
    let mut d = DVector::zeros(rows);
    c.view_mut((0, 0), (n_in, n)).copy_from(&p.c_in);
    d.rows_mut(0, n_in).copy_from(&p.d_in);
    for (k, &j) in lower_idx.iter().enumerate() {
        c[(n_in + k, j)] = -1.0;
        d[n_in + k] = -p.lower.as_ref().unwrap()[j];
    }
    let off = n_in + lower_idx.len();
    for (k, &j) in upper_idx.iter().enumerate() {
        c[(off + k, j)] = 1.0;
        d[off + k] = p.upper.as_ref().unwrap()[j];
    }
    Stacked {
        c,
        d,
        n_in,
        lower_idx,
        upper_idx,
    }
}

impl Stacked {
    fn split(&self, n: usize, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let lam = y.rows(0, self.n_in).into_owned();
        let mut lo = DVector::zeros(if self.lower_idx.is_empty() { 0 } else { n });
        for (k, &j) in self.lower_idx.iter().enumerate() {
            lo[j] = y[self.n_in + k];
        }
        let off = self.n_in + self.lower_idx.len();
        let mut hi = DVector::zeros(if self.upper_idx.is_empty() { 0 } else { n });
        for (k, &j) in self.upper_idx.iter().enumerate() {
            hi[j] = y[off + k];
        }
        (lam, lo, hi)
    }
}

/// Reduced problem plus everything needed to map results back.
struct Prepared {
    elim: EqualityElimination,
    stacked: Stacked,
    tableau: Tableau,
    reduced_cost: DVector<f64>,
}

enum Prep {
    Ready(Box<Prepared>),
    Infeasible(FarkasCertificate),
}

fn prepare(p: &LpProblem) -> Result<Prep> {
    p.validate()?;
    let n = p.n();
    let stacked = stack_rows(p);
    let has_lo = !stacked.lower_idx.is_empty();
    let has_hi = !stacked.upper_idx.is_empty();

    // Zero inequality rows are vacuous unless their right-hand side is negative.
    let mut zero_rows = 0;
    for i in 0..stacked.c.nrows() {
        if stacked.c.row(i).iter().all(|v| *v == 0.0) {
            zero_rows += 1;
            if stacked.d[i] < -LP_TOL {
                let mut y = DVector::zeros(stacked.c.nrows());
                y[i] = 1.0;
                let (lambda, lambda_lower, lambda_upper) = stacked.split(n, &y);
                return Ok(Prep::Infeasible(FarkasCertificate {
                    nu: DVector::zeros(p.a_eq.nrows()),
                    lambda,
                    lambda_lower,
                    lambda_upper,
                }));
            }
        }
    }
    if zero_rows > 0 {
        log::warn!("LP: {zero_rows} all-zero inequality rows ignored");
    }

    let elim = EqualityElimination::new(&p.a_eq, &p.b_eq)?;
    if let Some(y) = elim.inconsistency() {
        let cert = FarkasCertificate {
            nu: y.clone(),
            lambda: DVector::zeros(p.c_in.nrows()),
            lambda_lower: DVector::zeros(if has_lo { n } else { 0 }),
            lambda_upper: DVector::zeros(if has_hi { n } else { 0 }),
        };
        return Ok(Prep::Infeasible(cert.normalized()));
    }
    let (g, e) = elim.reduce_ineq(&stacked.c, &stacked.d);
    let (_, reduced_cost) = elim.reduce_linear(&p.c);
    let tableau = Tableau::new(g, e, DVector::zeros(elim.n_free()));
    Ok(Prep::Ready(Box::new(Prepared {
        elim,
        stacked,
        tableau,
        reduced_cost,
    })))
}

impl Prepared {
    fn certificate(&self, p: &LpProblem, row: usize) -> Result<FarkasCertificate> {
        let y = self.tableau.farkas_row(row);
        let g = self.stacked.c.transpose() * &y;
        let nu = self.elim.multipliers_for(&g)?;
        let (lambda, lambda_lower, lambda_upper) = self.stacked.split(p.n(), &y);
        let cert = FarkasCertificate {
            nu,
            lambda,
            lambda_lower,
            lambda_upper,
        }
        .normalized();
        if !cert.is_valid_for(p) {
            return Err(Error::NumericalFailure(format!(
                "certificate check failed (residual {:.3e}, value {:.3e})",
                inf_norm(&cert.dual_residual(p)),
                cert.value(p)
            )));
        }
        Ok(cert)
    }

    fn feasible_point(&self, p: &LpProblem) -> Result<DVector<f64>> {
        let w = self.tableau.point();
        let x = self.elim.expand(&w);
        check_primal(p, &self.stacked, &x)?;
        Ok(x)
    }
}

fn check_primal(p: &LpProblem, stacked: &Stacked, x: &DVector<f64>) -> Result<()> {
    let eq_res = inf_norm(&(&p.a_eq * x - &p.b_eq));
    if eq_res > LP_TOL * (1.0 + inf_norm(&p.b_eq)) {
        return Err(Error::NumericalFailure(format!("equality residual {eq_res:.3e}")));
    }
    let viol = (&stacked.c * x - &stacked.d).max();
    if stacked.c.nrows() > 0 && viol > LP_TOL {
        return Err(Error::NumericalFailure(format!("inequality violation {viol:.3e}")));
    }
    Ok(())
}

/// Decides feasibility of the constraint set of `p` (its objective is ignored).
pub fn solve_feasibility(p: &LpProblem) -> Result<Feasibility> {
    let mut prep = match prepare(p)? {
        Prep::Infeasible(cert) => return Ok(Feasibility::Infeasible { cert }),
        Prep::Ready(prep) => prep,
    };
    match prep.tableau.dual_simplex()? {
        DualOutcome::Feasible => Ok(Feasibility::Feasible {
            x: prep.feasible_point(p)?,
        }),
        DualOutcome::Infeasible(r) => Ok(Feasibility::Infeasible {
            cert: prep.certificate(p, r)?,
        }),
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    let mut prep = match prepare(p)? {
        Prep::Infeasible(cert) => return Ok(LpOutcome::Infeasible(cert)),
        Prep::Ready(prep) => prep,
    };
    if let DualOutcome::Infeasible(r) = prep.tableau.dual_simplex()? {
        return Ok(LpOutcome::Infeasible(prep.certificate(p, r)?));
    }
    prep.tableau.set_costs(prep.reduced_cost.clone());
    match prep.tableau.primal_simplex()? {
        PrimalOutcome::Unbounded => Ok(LpOutcome::Unbounded),
        PrimalOutcome::Optimal => {
            let x = prep.feasible_point(p)?;
            let mu = prep.tableau.row_duals();
            let g = &p.c + prep.stacked.c.transpose() * &mu;
            let eq = prep.elim.multipliers_for(&g)?;
            let (ineq, lower, upper) = prep.stacked.split(p.n(), &mu);
            Ok(LpOutcome::Optimal(LpSolution {
                objective: p.c.dot(&x),
                x,
                duals: LpDuals {
                    eq,
                    ineq,
                    lower,
                    upper,
                },
            }))
        }
    }
}

/// Which alternative of the theorem of alternatives holds for
/// `{A x = b, C x ≤ d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactlyOne {
    pub feasible: bool,
}

/// Runs the feasibility solve and then checks that the opposite alternative
/// fails: a found point rules out any certificate (every certificate would
/// have `bᵀν + dᵀλ = (Cx − d)ᵀ(−λ) ≥ 0`), a found certificate is re-verified
/// and no point may satisfy the constraints it refutes.
pub fn verify_alternatives(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    c_in: &DMatrix<f64>,
    d_in: &DVector<f64>,
) -> Result<ExactlyOne> {
    let p = LpProblem::feasibility(a_eq.clone(), b_eq.clone(), c_in.clone(), d_in.clone());
    match solve_feasibility(&p)? {
        Feasibility::Feasible { x } => {
            // Search for a certificate anyway: maximise -(bᵀν + dᵀλ) over the
            // normalised dual cone. A feasible primal bounds it by zero.
            let best = min_certificate_value(&p)?;
            if best < -1e-6 {
                return Err(Error::NumericalFailure(format!(
                    "both alternatives hold (point residual {:.2e}, certificate value {best:.2e})",
                    inf_norm(&(a_eq * &x - b_eq))
                )));
            }
            Ok(ExactlyOne { feasible: true })
        }
        Feasibility::Infeasible { cert } => {
            if !cert.is_valid_for(&p) {
                return Err(Error::NumericalFailure("invalid certificate".into()));
            }
            Ok(ExactlyOne { feasible: false })
        }
    }
}

/// `min bᵀν + dᵀλ  s.t.  Aᵀν + Cᵀλ = 0, λ ≥ 0, −1 ≤ ν ≤ 1, λ ≤ 1`.
fn min_certificate_value(p: &LpProblem) -> Result<f64> {
    let (me, mi) = (p.a_eq.nrows(), p.c_in.nrows());
    let n = p.n();
    let nv = me + mi;
    let mut a = DMatrix::zeros(n, nv);
    a.view_mut((0, 0), (n, me)).copy_from(&p.a_eq.transpose());
    a.view_mut((0, me), (n, mi)).copy_from(&p.c_in.transpose());
    let mut c = DVector::zeros(nv);
    c.rows_mut(0, me).copy_from(&p.b_eq);
    c.rows_mut(me, mi).copy_from(&p.d_in);
    let mut lo = DVector::from_element(nv, -1.0);
    lo.rows_mut(me, mi).fill(0.0);
    let dual = LpProblem {
        c,
        a_eq: a,
        b_eq: DVector::zeros(n),
        c_in: DMatrix::zeros(0, nv),
        d_in: DVector::zeros(0),
        lower: Some(lo),
        upper: Some(DVector::from_element(nv, 1.0)),
    };
    match solve_lp(&dual)? {
        LpOutcome::Optimal(sol) => Ok(sol.objective),
        other => Err(Error::NumericalFailure(format!(
            "bounded certificate search returned {:?}",
            std::mem::discriminant(&other)
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_equality_is_feasible() {
        let p = LpProblem::feasibility(
            DMatrix::from_element(1, 1, 1.0),
            v(&[0.0]),
            DMatrix::zeros(0, 1),
            v(&[]),
        );
        match solve_feasibility(&p).unwrap() {
            Feasibility::Feasible { x } => assert_eq!(x[0], 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_times_x_equals_one_is_infeasible() {
        let p = LpProblem::feasibility(
            DMatrix::from_element(1, 1, 0.0),
            v(&[1.0]),
            DMatrix::zeros(0, 1),
            v(&[]),
        );
        match solve_feasibility(&p).unwrap() {
            Feasibility::Infeasible { cert } => {
                assert!(cert.nu[0] < 0.0);
                assert!(cert.is_valid_for(&p));
                assert_eq!(cert.scale(), 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn min_x_with_lower_row() {
        let p = LpProblem {
            c: v(&[1.0]),
            a_eq: DMatrix::zeros(0, 1),
            b_eq: v(&[]),
            c_in: DMatrix::from_element(1, 1, -1.0),
            d_in: v(&[-1.0]),
            lower: None,
            upper: None,
        };
        match solve_lp(&p).unwrap() {
            LpOutcome::Optimal(s) => {
                assert!((s.x[0] - 1.0).abs() < 1e-12);
                assert!((s.objective - 1.0).abs() < 1e-12);
                assert!((s.duals.ineq[0] - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_below() {
        let p = LpProblem {
            c: v(&[-1.0]),
            a_eq: DMatrix::zeros(0, 1),
            b_eq: v(&[]),
            c_in: DMatrix::zeros(0, 1),
            d_in: v(&[]),
            lower: Some(v(&[0.0])),
            upper: None,
        };
        assert!(matches!(solve_lp(&p).unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn zero_row_with_negative_rhs_is_certified() {
        let p = LpProblem::feasibility(
            DMatrix::zeros(0, 2),
            v(&[]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            v(&[1.0, -2.0]),
        );
        let Feasibility::Infeasible { cert } = solve_feasibility(&p).unwrap() else {
            panic!("expected infeasible");
        };
        assert!(cert.is_valid_for(&p));
        assert_eq!(cert.lambda[1], 1.0);
    }

    #[test]
    fn certificate_scaling_keeps_validity() {
        let p = LpProblem::feasibility(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[1.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
            v(&[-1.0, -1.0]),
        );
        let Feasibility::Infeasible { cert } = solve_feasibility(&p).unwrap() else {
            panic!("expected infeasible");
        };
        for a in [1e-3, 0.5, 7.0, 1e4] {
            assert!(cert.scaled(a).is_valid_for(&p));
        }
    }

    #[test]
    fn verify_alternatives_simple_cases() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::from_element(1, 1, 0.0);
        let none = DMatrix::zeros(0, 1);
        let r = verify_alternatives(&one, &v(&[0.0]), &none, &v(&[])).unwrap();
        assert!(r.feasible);
        let r = verify_alternatives(&zero, &v(&[1.0]), &none, &v(&[])).unwrap();
        assert!(!r.feasible);
    }
}
