//! Linearised cart-pole between two soft walls.
//!
//! State `(x1, x2, x3, x4)` = cart position, pole angle, cart velocity, pole
//! angular velocity. Input `(u, λ1, λ2)` = force and the two contact forces.
//! Binaries `(δ1, δ2)` switch contact with the right and left wall; the
//! parameter `θ = (d1, d2)` holds the wall distances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{condense, riccati_terminal, CondensedProblem, MldSystem};
use crate::error::{Error, Result};

pub const N_THETA: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub m_c: f64,
    pub m_p: f64,
    pub l: f64,
    pub k1: f64,
    pub k2: f64,
    pub u_max: f64,
    pub dt: f64,
    pub horizon: usize,
    pub g: f64,
    /// Big-M distance between pole and wall.
    pub big_m_distance: f64,
    /// Big-M contact force.
    pub big_m_force: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub angle_max: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        let (d_min, d_max, l, k1) = (-1.0, 1.0, 0.6, 50.0);
        let big_m_distance = (d_max - d_min) + l;
        Self {
            m_c: 1.0,
            m_p: 0.4,
            l,
            k1,
            k2: 50.0,
            u_max: 20.0,
            dt: 0.02,
            horizon: 10,
            g: 9.81,
            big_m_distance,
            big_m_force: k1 * big_m_distance,
            d_min,
            d_max,
            v_max: 10.0,
            w_max: 10.0,
            angle_max: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_c", self.m_c),
            ("m_p", self.m_p),
            ("l", self.l),
            ("k1", self.k1),
            ("k2", self.k2),
            ("u_max", self.u_max),
            ("dt", self.dt),
            ("g", self.g),
            ("big_m_distance", self.big_m_distance),
            ("big_m_force", self.big_m_force),
            ("v_max", self.v_max),
            ("w_max", self.w_max),
            ("angle_max", self.angle_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.d_min.is_nan() || self.d_max.is_nan() || self.d_min >= self.d_max {
            return Err(Error::Config("d_min must be below d_max".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Condensed problem with `Q_k = I4`, `R_k = I3` and a Riccati terminal
    /// weight on the force channel.
    pub fn problem(&self) -> Result<CondensedProblem> {
        self.validate()?;
        let sys = cartpole_mld(self);
        let q_k = DMatrix::identity(4, 4);
        let r_k = DMatrix::identity(3, 3);
        let q_n = riccati_terminal(&sys.e, &sys.f.column(0).into_owned(), &q_k, 1.0)?;
        condense(&sys, self.horizon, &q_k, &r_k, &q_n)
    }
}

pub fn cartpole_mld(p: &CartPoleParams) -> MldSystem {
    let dt = p.dt;
    let mut e = DMatrix::identity(4, 4);
    e[(0, 2)] += dt;
    e[(1, 3)] += dt;
    e[(2, 1)] += dt * p.g * p.m_p / p.m_c;
    e[(3, 1)] += dt * p.g * (p.m_c + p.m_p) / (p.l * p.m_c);

    let mut f = DMatrix::zeros(4, 3);
    f[(2, 0)] = dt / p.m_c;
    f[(3, 0)] = dt / (p.l * p.m_c);
    f[(3, 1)] = dt / (p.l * p.m_p);
    f[(3, 2)] = -dt / (p.l * p.m_p);

    let nc = 20;
    let mut h1 = DMatrix::zeros(nc, 4);
    let mut h2 = DMatrix::zeros(nc, 3);
    let mut h3 = DMatrix::zeros(nc, 2);
    let mut h_base = DVector::zeros(nc);
    let mut h_theta = DMatrix::zeros(nc, N_THETA);
    let (lmax, dmax) = (p.big_m_force, p.big_m_distance);

    // Contact logic.
    h2[(0, 1)] = 1.0;
    h3[(0, 0)] = -lmax;
    h2[(1, 2)] = 1.0;
    h3[(1, 1)] = -lmax;

    h1[(2, 0)] = -1.0;
    h1[(2, 1)] = p.l;
    h2[(2, 1)] = 1.0 / p.k1;
    h3[(2, 0)] = dmax;
    h_base[2] = dmax;
    h_theta[(2, 0)] = -1.0;

    h1[(3, 0)] = 1.0;
    h1[(3, 1)] = -p.l;
    h2[(3, 1)] = -1.0 / p.k1;
    h_theta[(3, 0)] = 1.0;

    h1[(4, 0)] = 1.0;
    h1[(4, 1)] = -p.l;
    h2[(4, 2)] = 1.0 / p.k2;
    h3[(4, 1)] = dmax;
    h_base[4] = dmax;
    h_theta[(4, 1)] = -1.0;

    h1[(5, 0)] = -1.0;
    h1[(5, 1)] = p.l;
    h2[(5, 2)] = -1.0 / p.k2;
    h_theta[(5, 1)] = 1.0;

    // Box limits.
    let mut row = 6;
    let state_limits = [
        (0, p.d_max, -p.d_min),
        (1, p.angle_max, p.angle_max),
        (2, p.v_max, p.v_max),
        (3, p.w_max, p.w_max),
    ];
    for (j, hi, neg_lo) in state_limits {
        h1[(row, j)] = 1.0;
        h_base[row] = hi;
        h1[(row + 1, j)] = -1.0;
        h_base[row + 1] = neg_lo;
        row += 2;
    }
    h2[(row, 0)] = 1.0;
    h_base[row] = p.u_max;
    h2[(row + 1, 0)] = -1.0;
    h_base[row + 1] = p.u_max;
    row += 2;
    for j in 1..3 {
        h2[(row, j)] = 1.0;
        h_base[row] = lmax;
        h2[(row + 1, j)] = -1.0;
        row += 2;
    }
    debug_assert_eq!(row, nc);

    MldSystem {
        e,
        f,
        g: DMatrix::zeros(4, 2),
        h1,
        h2,
        h3,
        h_base,
        h_theta,
    }
}
