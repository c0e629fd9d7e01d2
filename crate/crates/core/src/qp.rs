//! Dense convex QP: `min xᵀQx  s.t.  A x = b, C x ≤ d` with `Q ≻ 0`.
//!
//! Equalities are eliminated through [`EqualityElimination`]; a primal
//! active-set method runs on the reduced problem starting from a feasible
//! point (normally the LP feasibility point). Multipliers follow the
//! Lagrangian `L = xᵀQx + νᵀ(Ax − b) + λᵀ(Cx − d)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, inf_norm, EqualityElimination};
use crate::lp::{self, Feasibility, LpProblem};

pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c_in: DMatrix<f64>,
    pub d_in: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x_star: DVector<f64>,
    pub nu_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub f_star: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible(lp::FarkasCertificate),
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.q.ncols() != n || self.a_eq.ncols() != n || self.c_in.ncols() != n {
            return Err(Error::DimensionMismatch("QP column counts".into()));
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.c_in.nrows() != self.d_in.len() {
            return Err(Error::DimensionMismatch("QP row counts".into()));
        }
        if !all_finite_mat(&self.q)
            || !all_finite_mat(&self.a_eq)
            || !all_finite_vec(&self.b_eq)
            || !all_finite_mat(&self.c_in)
            || !all_finite_vec(&self.d_in)
        {
            return Err(Error::NonFinite("QP data"));
        }
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > 1e-12 * self.q.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite("Q is not symmetric"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x))
    }

    pub fn feasibility_lp(&self) -> LpProblem {
        LpProblem::feasibility(
            self.a_eq.clone(),
            self.b_eq.clone(),
            self.c_in.clone(),
            self.d_in.clone(),
        )
    }
}

fn cholesky(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(what))
}

/// Solves `p`, screening feasibility with the LP kernel first.
pub fn solve_qp(p: &QpProblem) -> Result<QpOutcome> {
    solve_qp_from(p, None)
}

/// Solves `p` from a feasible `start` (e.g. the LP feasibility point). When
/// `start` is `None` or infeasible, an LP feasibility solve provides one.
pub fn solve_qp_from(p: &QpProblem, start: Option<&DVector<f64>>) -> Result<QpOutcome> {
    p.validate()?;
    cholesky(p.q.clone(), "Q")?;

    let elim = EqualityElimination::new(&p.a_eq, &p.b_eq)?;
    let start_ok = start.filter(|x| {
        x.len() == p.n()
            && inf_norm(&(&p.a_eq * *x - &p.b_eq)) <= 1e-9 * (1.0 + inf_norm(&p.b_eq))
            && (p.c_in.nrows() == 0 || (&p.c_in * *x - &p.d_in).max() <= 1e-9)
    });
    let x0 = match (start_ok, elim.inconsistency()) {
        (Some(x), None) => x.clone(),
        _ => match lp::solve_feasibility(&p.feasibility_lp())? {
            Feasibility::Feasible { x } => x,
            Feasibility::Infeasible { cert } => return Ok(QpOutcome::Infeasible(cert)),
        },
    };

    let (xp, z) = elim.affine_map();
    let nf = z.ncols();
    let w0 = elim.restrict(&x0);

    let qz = &p.q * &z;
    let h = (z.transpose() * &qz) * 2.0;
    let g = (z.transpose() * (&p.q * &xp)) * 2.0;
    let (gm, e) = elim.reduce_ineq(&p.c_in, &p.d_in);

    let (w, mu, iterations) = if nf == 0 {
        (DVector::zeros(0), DVector::zeros(p.c_in.nrows()), 0)
    } else {
        active_set(&h, &g, &gm, &e, w0)?
    };

    let x = &xp + &z * &w;
    let lambda = mu;
    let grad = &p.q * &x * 2.0 + p.c_in.transpose() * &lambda;
    let nu = elim.multipliers_for(&grad)?;
    let sol = QpSolution {
        f_star: p.objective(&x),
        x_star: x,
        nu_star: nu,
        lambda_star: lambda,
        iterations,
    };
    Ok(QpOutcome::Optimal(sol))
}

/// Primal active set on `min ½wᵀHw + gᵀw  s.t.  G w ≤ e` from feasible `w`.
fn active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    gm: &DMatrix<f64>,
    e: &DVector<f64>,
    mut w: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    let n = h.nrows();
    let m = gm.nrows();
    cholesky(h.clone(), "reduced Hessian")?;
    let mut working: Vec<usize> = Vec::new();
    let cap = 50 * (m + n).max(1);
    let row_norm: Vec<f64> = (0..m).map(|i| gm.row(i).amax().max(1e-300)).collect();

    for iter in 0..cap {
        let q = h * &w + g;
        let (p, mult) = eqp_step(h, gm, &working, &q)?;
        let scale = 1.0 + inf_norm(&w);
        if inf_norm(&p) <= 1e-11 * scale {
            // Stationary on the working set: check multiplier signs.
            let mut worst: Option<(usize, f64)> = None;
            for (k, &mu) in mult.iter().enumerate() {
                if mu < -1e-10 * (1.0 + inf_norm(&q)) && worst.is_none_or(|(_, v)| mu < v) {
                    worst = Some((k, mu));
                }
            }
            match worst {
                None => {
                    let mut full = DVector::zeros(m);
                    for (k, &i) in working.iter().enumerate() {
                        full[i] = mult[k].max(0.0);
                    }
                    return Ok((w, full, iter));
                }
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }

        let mut step = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gp = gm.row(i).dot(&p.transpose());
            if gp > 1e-9 * row_norm[i] * inf_norm(&p) {
                let slack = (e[i] - gm.row(i).dot(&w.transpose())).max(0.0);
                let t = slack / gp;
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        w += &p * step;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::MaxIterations(cap))
}

/// Equality-constrained step `min ½pᵀHp + qᵀp  s.t.  G_W p = 0` by the
/// null-space method. Returns `(p, μ_W)` with `Hp + q + G_Wᵀμ = 0`.
fn eqp_step(
    h: &DMatrix<f64>,
    gm: &DMatrix<f64>,
    working: &[usize],
    q: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let k = working.len();
    if k == 0 {
        let p = -cholesky(h.clone(), "reduced Hessian")?.solve(q);
        return Ok((p, DVector::zeros(0)));
    }
    // [G_Wᵀ | I] = Q R gives a full orthogonal Q whose first k columns span
    // the working-set normals.
    let mut m = DMatrix::zeros(n, k + n);
    for (c, &i) in working.iter().enumerate() {
        for j in 0..n {
            m[(j, c)] = gm[(i, j)];
        }
    }
    m.view_mut((0, k), (n, n)).fill_with_identity();
    let qr = m.qr();
    let qf = qr.q();
    let r = qr.r();
    let y = qf.columns(0, k);
    let rk = r.view((0, 0), (k, k)).into_owned();
    let p = if k < n {
        let z = qf.columns(k, n - k);
        let hz = h * z;
        let rh = z.transpose() * &hz;
        let pz = cholesky(rh, "projected Hessian")?.solve(&-(z.transpose() * q));
        z * pz
    } else {
        DVector::zeros(n)
    };
    let resid = h * &p + q;
    let mu = rk
        .solve_upper_triangular(&-(y.transpose() * resid))
        .ok_or_else(|| Error::NumericalFailure("dependent working set".into()))?;
    Ok((p, mu))
}

/// Unconstrained minimiser of the Lagrangian in `x`:
/// `x⁰ = −½ Q⁻¹ (Aᵀν + Cᵀλ)`.
pub fn unconstrained_minimizer(
    q: &DMatrix<f64>,
    a_eq: &DMatrix<f64>,
    c_in: &DMatrix<f64>,
    nu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = cholesky(q.clone(), "Q")?;
    let r = a_eq.transpose() * nu + c_in.transpose() * lambda;
    Ok(chol.solve(&r) * -0.5)
}

/// Lagrange dual function `−¼‖Aᵀν + Cᵀλ‖²_{Q⁻¹} − bᵀν − dᵀλ`.
#[allow(clippy::too_many_arguments)]
pub fn dual_objective(
    q: &DMatrix<f64>,
    a_eq: &DMatrix<f64>,
    c_in: &DMatrix<f64>,
    b: &DVector<f64>,
    d: &DVector<f64>,
    nu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64> {
    let chol = cholesky(q.clone(), "Q")?;
    let r = a_eq.transpose() * nu + c_in.transpose() * lambda;
    let qr = chol.solve(&r);
    Ok(-0.25 * r.dot(&qr) - b.dot(nu) - d.dot(lambda))
}

/// KKT residuals of a solution: (stationarity, primal, complementarity, dual gap).
pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> (f64, f64, f64, f64) {
    let x = &s.x_star;
    let stat = inf_norm(
        &(&p.q * x * 2.0 + p.a_eq.transpose() * &s.nu_star + p.c_in.transpose() * &s.lambda_star),
    );
    let eq = inf_norm(&(&p.a_eq * x - &p.b_eq));
    let slack = &p.c_in * x - &p.d_in;
    let ineq = if slack.is_empty() { 0.0 } else { slack.max().max(0.0) };
    let comp = slack
        .iter()
        .zip(s.lambda_star.iter())
        .fold(0.0_f64, |m, (s, l)| m.max((s * l).abs()));
    let dual = dual_objective(
        &p.q,
        &p.a_eq,
        &p.c_in,
        &p.b_eq,
        &p.d_in,
        &s.nu_star,
        &s.lambda_star,
    )
    .unwrap_or(f64::NAN);
    (stat, eq.max(ineq), comp, (s.f_star - dual).abs())
}
