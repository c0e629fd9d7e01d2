use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_STEPS: usize = 10_000;

fn dare_map(e: &DMatrix<f64>, f: &DVector<f64>, q: &DMatrix<f64>, r: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let pe = p * e;
    let pf = p * f;
    let denom = r + f.dot(&pf);
    let et_pf = e.transpose() * &pf;
    let mut next = q + e.transpose() * pe - (&et_pf * et_pf.transpose()) / denom;
    next = (&next + next.transpose()) * 0.5;
    next
}

/// Terminal weight from the discrete algebraic Riccati equation for a single
/// input column, by fixed-point iteration from `Q`.
pub fn riccati_terminal(
    e: &DMatrix<f64>,
    f_col: &DVector<f64>,
    q_k: &DMatrix<f64>,
    r: f64,
) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    if e.ncols() != n || f_col.len() != n || q_k.shape() != (n, n) {
        return Err(Error::DimensionMismatch("riccati shapes".into()));
    }
    let mut p = q_k.clone();
    for _ in 0..MAX_STEPS {
        let next = dare_map(e, f_col, q_k, r, &p);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(MAX_STEPS));
        }
        let change = (&next - &p).amax();
        p = next;
        if change <= 1e-13 * (1.0 + p.amax()) {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence(MAX_STEPS))
}

/// ∞-norm residual of the Riccati fixed point.
pub fn riccati_residual(
    e: &DMatrix<f64>,
    f_col: &DVector<f64>,
    q_k: &DMatrix<f64>,
    r: f64,
    p: &DMatrix<f64>,
) -> f64 {
    (dare_map(e, f_col, q_k, r, p) - p).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_fixed_point() {
        let e = DMatrix::from_element(1, 1, 0.5);
        let f = DVector::from_element(1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = riccati_terminal(&e, &f, &q, 1.0).unwrap()[(0, 0)];
        let mut oracle = 1.0_f64;
        for _ in 0..200 {
            oracle = oracle * 0.25 - 0.25 * oracle * oracle / (1.0 + oracle) + 1.0;
        }
        let res = p * 0.25 - 0.25 * p * p / (1.0 + p) + 1.0 - p;
        assert!(res.abs() <= 1e-10);
        assert!((p - oracle).abs() <= 1e-10);
    }

    #[test]
    fn deadbeat_returns_stage_weight() {
        let e = DMatrix::zeros(3, 3);
        let f = DVector::from_vec(vec![1.0, 0.0, 2.0]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(riccati_terminal(&e, &f, &q, 1.0).unwrap(), q);
    }

    #[test]
    fn uncontrollable_unstable_mode_fails() {
        let e = DMatrix::from_element(1, 1, 2.0);
        let f = DVector::from_element(1, 0.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert!(riccati_terminal(&e, &f, &q, 1.0).is_err());
    }
}
