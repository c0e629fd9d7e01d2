//! Dense helpers shared by the LP and QP kernels.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Absolute pivot threshold used by the eliminations and simplex kernels.
pub const PIVOT_TOL: f64 = 1e-10;

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn mat_max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_cols(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub fn select(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Column partition of an equality system `A x = b`.
///
/// Gaussian elimination with per-row maximal pivots picks an independent row
/// set `R` and pivot columns `P`. With `B = A[R, P]` and `N = A[R, F]` every
/// solution satisfies `x_P = x̂ − T x_F` where `T = B⁻¹N` and `x̂ = B⁻¹ b_R`.
/// Dependent rows are dropped when consistent; an inconsistent one yields a
/// left null vector `y` with `Aᵀy = 0` and `bᵀy < 0`.
pub struct EqualityElimination {
    n: usize,
    m: usize,
    rows: Vec<usize>,
    pivots: Vec<usize>,
    free: Vec<usize>,
    t: DMatrix<f64>,
    x_hat: DVector<f64>,
    bt_lu: Option<LU<f64, Dyn, Dyn>>,
    inconsistent: Option<DVector<f64>>,
}

impl EqualityElimination {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        let scale = mat_max_abs(a).max(1.0);
        let b_scale = 1.0 + inf_norm(b);

        // Working copy [A | I] so dependent rows carry their combination.
        let mut w = DMatrix::<f64>::zeros(m, n + m);
        w.view_mut((0, 0), (m, n)).copy_from(a);
        for i in 0..m {
            w[(i, n + i)] = 1.0;
        }
        let mut rhs = b.clone();
        let mut is_pivot = vec![false; n];
        let mut rows = Vec::new();
        let mut pivots = Vec::new();
        let mut inconsistent = None;

        for i in 0..m {
            let mut best = None;
            let mut best_val = PIVOT_TOL * scale;
            for j in 0..n {
                if !is_pivot[j] && w[(i, j)].abs() > best_val {
                    best_val = w[(i, j)].abs();
                    best = Some(j);
                }
            }
            match best {
                None => {
                    if rhs[i].abs() > 1e-9 * b_scale && inconsistent.is_none() {
                        let mut y = DVector::from_iterator(m, (0..m).map(|k| w[(i, n + k)]));
                        if rhs[i] > 0.0 {
                            y.neg_mut();
                        }
                        inconsistent = Some(y);
                    }
                }
                Some(j) => {
                    is_pivot[j] = true;
                    rows.push(i);
                    pivots.push(j);
                    let p = w[(i, j)];
                    for i2 in (i + 1)..m {
                        let f = w[(i2, j)] / p;
                        if f != 0.0 {
                            for k in 0..(n + m) {
                                let v = w[(i, k)];
                                w[(i2, k)] -= f * v;
                            }
                            rhs[i2] -= f * rhs[i];
                        }
                    }
                }
            }
        }

        let free: Vec<usize> = (0..n).filter(|&j| !is_pivot[j]).collect();
        let r = rows.len();
        let (t, x_hat, bt_lu) = if r == 0 {
            (DMatrix::zeros(0, free.len()), DVector::zeros(0), None)
        } else {
            let bmat = DMatrix::from_fn(r, r, |i, j| a[(rows[i], pivots[j])]);
            let nmat = DMatrix::from_fn(r, free.len(), |i, j| a[(rows[i], free[j])]);
            let b_r = select(b, &rows);
            let lu = bmat.clone().lu();
            let t = lu
                .solve(&nmat)
                .ok_or_else(|| Error::NumericalFailure("singular equality pivot block".into()))?;
            let x_hat = lu
                .solve(&b_r)
                .ok_or_else(|| Error::NumericalFailure("singular equality pivot block".into()))?;
            (t, x_hat, Some(bmat.transpose().lu()))
        };

        Ok(Self {
            n,
            m,
            rows,
            pivots,
            free,
            t,
            x_hat,
            bt_lu,
            inconsistent,
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Left null vector certifying `A x = b` has no solution, if any.
    pub fn inconsistency(&self) -> Option<&DVector<f64>> {
        self.inconsistent.as_ref()
    }

    /// Restricts `C x ≤ d` to the free coordinates: `C' w ≤ d'`.
    pub fn reduce_ineq(&self, c: &DMatrix<f64>, d: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let c_f = select_cols(c, &self.free);
        if self.pivots.is_empty() {
            return (c_f, d.clone());
        }
        let c_p = select_cols(c, &self.pivots);
        (c_f - &c_p * &self.t, d - &c_p * &self.x_hat)
    }

    /// Linear functional `gᵀx` in free coordinates: `(const, g')`.
    pub fn reduce_linear(&self, g: &DVector<f64>) -> (f64, DVector<f64>) {
        let g_f = select(g, &self.free);
        if self.pivots.is_empty() {
            return (0.0, g_f);
        }
        let g_p = select(g, &self.pivots);
        (g_p.dot(&self.x_hat), g_f - self.t.transpose() * g_p)
    }

    /// Particular solution (`w = 0`) and null-space basis `Z` with `x = x_p + Z w`.
    pub fn affine_map(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut xp = DVector::zeros(self.n);
        for (k, &j) in self.pivots.iter().enumerate() {
            xp[j] = self.x_hat[k];
        }
        let mut z = DMatrix::zeros(self.n, self.free.len());
        for (c, &j) in self.free.iter().enumerate() {
            z[(j, c)] = 1.0;
            for (k, &p) in self.pivots.iter().enumerate() {
                z[(p, c)] = -self.t[(k, c)];
            }
        }
        (xp, z)
    }

    /// Free-coordinate part of a point satisfying the equalities.
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        select(x, &self.free)
    }

    pub fn expand(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (c, &j) in self.free.iter().enumerate() {
            x[j] = w[c];
        }
        if !self.pivots.is_empty() {
            let xp = &self.x_hat - &self.t * w;
            for (k, &p) in self.pivots.iter().enumerate() {
                x[p] = xp[k];
            }
        }
        x
    }

    /// Equality multipliers `ν` solving `(Aᵀν)_P = −g_P` for a full-length
    /// vector `g`; dependent rows get zero.
    pub fn multipliers_for(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        let mut nu = DVector::zeros(self.m);
        if let Some(lu) = &self.bt_lu {
            let rhs = -select(g, &self.pivots);
            let nu_r = lu
                .solve(&rhs)
                .ok_or_else(|| Error::NumericalFailure("singular equality pivot block".into()))?;
            for (k, &i) in self.rows.iter().enumerate() {
                nu[i] = nu_r[k];
            }
        }
        Ok(nu)
    }
}
