//! Mixed-logic dynamic systems and their condensed horizon form.
//!
//! Stage model:
//!
//! ```text
//! x_{k+1} = E x_k + F u_k + G δ_k
//! H1 x_k + H2 u_k + H3 δ_k ≤ h(θ)
//! ```
//!
//! Condensing stacks `[x_0, u_0, …, x_{N-1}, u_{N-1}, x_N]` into one vector
//! with `A x = b(x_ini, δ)` and `C x ≤ d(θ, δ)`; both right-hand sides are kept
//! as explicit affine maps so cuts can be re-evaluated cheaply.

mod cartpole;
mod riccati;

pub use cartpole::{cartpole_mld, CartPoleParams, N_THETA};
pub use riccati::{riccati_residual, riccati_terminal};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::LpProblem;
use crate::qp::QpProblem;

#[derive(Debug, Clone)]
pub struct MldSystem {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub h3: DMatrix<f64>,
    /// `h(θ) = h_base + h_theta · θ`.
    pub h_base: DVector<f64>,
    pub h_theta: DMatrix<f64>,
}

impl MldSystem {
    pub fn n_x(&self) -> usize {
        self.e.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.f.ncols()
    }
    pub fn n_delta(&self) -> usize {
        self.g.ncols()
    }
    pub fn n_c(&self) -> usize {
        self.h1.nrows()
    }
    pub fn n_theta(&self) -> usize {
        self.h_theta.ncols()
    }

    pub fn h(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.h_base + &self.h_theta * theta
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu, nd, nc) = (self.n_x(), self.n_u(), self.n_delta(), self.n_c());
        let checks = [
            ("E", self.e.shape(), (nx, nx)),
            ("F", self.f.shape(), (nx, nu)),
            ("G", self.g.shape(), (nx, nd)),
            ("H1", self.h1.shape(), (nc, nx)),
            ("H2", self.h2.shape(), (nc, nu)),
            ("H3", self.h3.shape(), (nc, nd)),
            ("h_theta", self.h_theta.shape(), (nc, self.n_theta())),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {got:?}, expected {want:?}"
                )));
            }
        }
        if self.h_base.len() != nc {
            return Err(Error::DimensionMismatch("h_base length".into()));
        }
        Ok(())
    }
}

/// Horizon-`N` condensed problem `min xᵀQx  s.t.  A x = b, C x ≤ d`.
#[derive(Debug, Clone)]
pub struct CondensedProblem {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_delta: usize,
    pub n_c: usize,
    pub n_theta: usize,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// `b = b_x · x_ini + b_delta · δ`.
    pub b_x: DMatrix<f64>,
    pub b_delta: DMatrix<f64>,
    /// `d = d0 + d_theta · θ + d_delta · δ`.
    pub d0: DVector<f64>,
    pub d_theta: DMatrix<f64>,
    pub d_delta: DMatrix<f64>,
}

pub fn condense(
    sys: &MldSystem,
    horizon: usize,
    q_k: &DMatrix<f64>,
    r_k: &DMatrix<f64>,
    q_n: &DMatrix<f64>,
) -> Result<CondensedProblem> {
    sys.validate()?;
    if horizon == 0 {
        return Err(Error::DimensionMismatch("horizon must be at least 1".into()));
    }
    let (nx, nu, nd, nc, nt) = (sys.n_x(), sys.n_u(), sys.n_delta(), sys.n_c(), sys.n_theta());
    if q_k.shape() != (nx, nx) || q_n.shape() != (nx, nx) || r_k.shape() != (nu, nu) {
        return Err(Error::DimensionMismatch("cost weight shapes".into()));
    }
    let nxu = nx + nu;
    let nv = horizon * nxu + nx;
    let nb = horizon * nd;

    let mut a = DMatrix::zeros((horizon + 1) * nx, nv);
    a.view_mut((0, 0), (nx, nx)).fill_with_identity();
    for k in 0..horizon {
        let r = (k + 1) * nx;
        let col = k * nxu;
        a.view_mut((r, col), (nx, nx)).copy_from(&(-&sys.e));
        a.view_mut((r, col + nx), (nx, nu)).copy_from(&(-&sys.f));
        a.view_mut((r, col + nxu), (nx, nx)).fill_with_identity();
    }

    let mut b_x = DMatrix::zeros((horizon + 1) * nx, nx);
    b_x.view_mut((0, 0), (nx, nx)).fill_with_identity();
    let mut b_delta = DMatrix::zeros((horizon + 1) * nx, nb);
    for k in 0..horizon {
        b_delta
            .view_mut(((k + 1) * nx, k * nd), (nx, nd))
            .copy_from(&sys.g);
    }

    let mut c = DMatrix::zeros(horizon * nc, nv);
    let mut d0 = DVector::zeros(horizon * nc);
    let mut d_theta = DMatrix::zeros(horizon * nc, nt);
    let mut d_delta = DMatrix::zeros(horizon * nc, nb);
    for k in 0..horizon {
        let r = k * nc;
        c.view_mut((r, k * nxu), (nc, nx)).copy_from(&sys.h1);
        c.view_mut((r, k * nxu + nx), (nc, nu)).copy_from(&sys.h2);
        d0.rows_mut(r, nc).copy_from(&sys.h_base);
        d_theta.view_mut((r, 0), (nc, nt)).copy_from(&sys.h_theta);
        d_delta
            .view_mut((r, k * nd), (nc, nd))
            .copy_from(&(-&sys.h3));
    }

    let mut q = DMatrix::zeros(nv, nv);
    for k in 0..horizon {
        q.view_mut((k * nxu, k * nxu), (nx, nx)).copy_from(q_k);
        q.view_mut((k * nxu + nx, k * nxu + nx), (nu, nu)).copy_from(r_k);
    }
    q.view_mut((horizon * nxu, horizon * nxu), (nx, nx))
        .copy_from(q_n);

    Ok(CondensedProblem {
        horizon,
        n_x: nx,
        n_u: nu,
        n_delta: nd,
        n_c: nc,
        n_theta: nt,
        a,
        c,
        q,
        b_x,
        b_delta,
        d0,
        d_theta,
        d_delta,
    })
}

impl CondensedProblem {
    pub fn n_bin(&self) -> usize {
        self.horizon * self.n_delta
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * (self.n_x + self.n_u) + self.n_x
    }

    pub fn b(&self, x_ini: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        &self.b_x * x_ini + &self.b_delta * delta
    }

    pub fn d(&self, theta: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        &self.d0 + &self.d_theta * theta + &self.d_delta * delta
    }

    pub fn check_args(
        &self,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
        delta: &DVector<f64>,
    ) -> Result<()> {
        if x_ini.len() != self.n_x || theta.len() != self.n_theta || delta.len() != self.n_bin() {
            return Err(Error::DimensionMismatch(format!(
                "x_ini {}, theta {}, delta {} (want {}, {}, {})",
                x_ini.len(),
                theta.len(),
                delta.len(),
                self.n_x,
                self.n_theta,
                self.n_bin()
            )));
        }
        Ok(())
    }

    /// The subproblem for fixed binaries.
    pub fn subproblem(
        &self,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
        delta: &DVector<f64>,
    ) -> QpProblem {
        QpProblem {
            q: self.q.clone(),
            a_eq: self.a.clone(),
            b_eq: self.b(x_ini, delta),
            c_in: self.c.clone(),
            d_in: self.d(theta, delta),
        }
    }

    pub fn feasibility_lp(
        &self,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
        delta: &DVector<f64>,
    ) -> LpProblem {
        LpProblem::feasibility(
            self.a.clone(),
            self.b(x_ini, delta),
            self.c.clone(),
            self.d(theta, delta),
        )
    }

    /// Stage-`k` input block of a stacked vector.
    pub fn input(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        let off = k * (self.n_x + self.n_u) + self.n_x;
        x.rows(off, self.n_u).into_owned()
    }

    /// Stage-`k` state block of a stacked vector (`k ≤ N`).
    pub fn state(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        let off = k * (self.n_x + self.n_u);
        x.rows(off, self.n_x).into_owned()
    }

    /// Index of binary `j` of stage `k`.
    pub fn bin_index(&self, k: usize, j: usize) -> usize {
        k * self.n_delta + j
    }
}
