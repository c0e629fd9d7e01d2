//! Feasibility and optimality cuts over the binaries of a [`CondensedProblem`],
//! and the persistent store that carries them across problem instances.
//!
//! A cut keeps its dual data; its affine form in `δ` splits into a
//! parameter-free coefficient and an offset that depends on `(x_ini, θ)`, so
//! moving to a new instance only recomputes offsets.

mod index;
mod snapshot;

pub use snapshot::SNAPSHOT_VERSION;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::lp::FarkasCertificate;
use crate::mld::CondensedProblem;
use crate::qp::QpSolution;
use index::{key, KeyIndex, MAX_WEIGHT};

/// Two normalized feasibility rays closer than this (∞-norm) are one ray.
pub const RAY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutOrigin {
    Direct,
    Shifted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Added,
    Duplicate,
}

/// Affine function `coef·δ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCut {
    pub coef: DVector<f64>,
    pub offset: f64,
}

impl AffineCut {
    pub fn eval(&self, delta: &DVector<f64>) -> f64 {
        self.coef.dot(delta) + self.offset
    }
}

/// Requires `b(x_ini, δ)ᵀν̃ + d(θ, δ)ᵀλ̃ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCut {
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub origin: CutOrigin,
    pub affine: AffineCut,
}

/// Lower bound `f* + ν*ᵀ(b_q − b(x_ini, δ)) + λ*ᵀ(d_q − d(θ, δ))` on the
/// subproblem value.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCut {
    pub f_star: f64,
    pub nu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub delta_q: DVector<f64>,
    pub b_q: DVector<f64>,
    pub d_q: DVector<f64>,
    pub affine: AffineCut,
}

fn ray_offset(
    p: &CondensedProblem,
    nu: &DVector<f64>,
    lambda: &DVector<f64>,
    x_ini: &DVector<f64>,
    theta: &DVector<f64>,
) -> f64 {
    nu.dot(&(&p.b_x * x_ini)) + lambda.dot(&(&p.d0 + &p.d_theta * theta))
}

fn ray_coef(p: &CondensedProblem, nu: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
    p.b_delta.transpose() * nu + p.d_delta.transpose() * lambda
}

fn check_dims(p: &CondensedProblem, nu: &DVector<f64>, lambda: &DVector<f64>) -> Result<()> {
    if nu.len() != p.a.nrows() || lambda.len() != p.c.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dual vector lengths ({}, {}) vs problem ({}, {})",
            nu.len(),
            lambda.len(),
            p.a.nrows(),
            p.c.nrows()
        )));
    }
    Ok(())
}

impl FeasibilityCut {
    fn from_ray(
        p: &CondensedProblem,
        nu: DVector<f64>,
        lambda: DVector<f64>,
        origin: CutOrigin,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        check_dims(p, &nu, &lambda)?;
        let lambda = lambda.map(|v| v.max(0.0));
        let s = inf_norm(&nu).max(inf_norm(&lambda));
        if s == 0.0 {
            return Err(Error::ShiftProducedZero);
        }
        let (nu, lambda) = (nu / s, lambda / s);
        let affine = AffineCut {
            coef: ray_coef(p, &nu, &lambda),
            offset: ray_offset(p, &nu, &lambda, x_ini, theta),
        };
        Ok(Self {
            nu,
            lambda,
            origin,
            affine,
        })
    }

    /// Cut from a certificate of the subproblem LP at `(x_ini, θ)`.
    pub fn from_certificate(
        p: &CondensedProblem,
        cert: &FarkasCertificate,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        Self::from_ray(
            p,
            cert.nu.clone(),
            cert.lambda.clone(),
            CutOrigin::Direct,
            x_ini,
            theta,
        )
        .map_err(|e| match e {
            Error::ShiftProducedZero => Error::NumericalFailure("zero certificate".into()),
            e => e,
        })
    }

    pub fn eval(&self, delta: &DVector<f64>) -> f64 {
        self.affine.eval(delta)
    }

    /// Stage blocks advanced by `m` with zero padding, renormalized.
    pub fn shifted(
        &self,
        p: &CondensedProblem,
        m: usize,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        let n = p.horizon;
        if m == 0 || m >= n {
            return Err(Error::DimensionMismatch(format!("shift {m} outside 1..{n}")));
        }
        let (nx, nc) = (p.n_x, p.n_c);
        let mut nu = DVector::zeros(self.nu.len());
        for k in 0..=(n - m) {
            nu.rows_mut(k * nx, nx)
                .copy_from(&self.nu.rows((k + m) * nx, nx));
        }
        let mut lambda = DVector::zeros(self.lambda.len());
        for k in 0..(n - m) {
            lambda
                .rows_mut(k * nc, nc)
                .copy_from(&self.lambda.rows((k + m) * nc, nc));
        }
        Self::from_ray(p, nu, lambda, CutOrigin::Shifted(m), x_ini, theta)
    }

    /// `‖Aᵀν̃ + Cᵀλ̃‖∞`, zero for a ray of the dual cone.
    pub fn dual_residual(&self, p: &CondensedProblem) -> f64 {
        inf_norm(&(p.a.transpose() * &self.nu + p.c.transpose() * &self.lambda))
    }
}

impl OptimalityCut {
    pub fn new(
        p: &CondensedProblem,
        sol: &QpSolution,
        delta_q: &DVector<f64>,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        check_dims(p, &sol.nu_star, &sol.lambda_star)?;
        let b_q = p.b(x_ini, delta_q);
        let d_q = p.d(theta, delta_q);
        let mut cut = Self {
            f_star: sol.f_star,
            nu: sol.nu_star.clone(),
            lambda: sol.lambda_star.map(|v| v.max(0.0)),
            delta_q: delta_q.clone(),
            b_q,
            d_q,
            affine: AffineCut {
                coef: DVector::zeros(p.n_bin()),
                offset: 0.0,
            },
        };
        cut.affine.coef = -ray_coef(p, &cut.nu, &cut.lambda);
        cut.reparameterize(p, x_ini, theta);
        Ok(cut)
    }

    fn constant(&self) -> f64 {
        self.f_star + self.nu.dot(&self.b_q) + self.lambda.dot(&self.d_q)
    }

    fn reparameterize(&mut self, p: &CondensedProblem, x_ini: &DVector<f64>, theta: &DVector<f64>) {
        self.affine.offset = self.constant() - ray_offset(p, &self.nu, &self.lambda, x_ini, theta);
    }

    pub fn eval(&self, delta: &DVector<f64>) -> f64 {
        self.affine.eval(delta)
    }

    /// Direct evaluation of the bound at `(x_ini, θ, δ)` without the cache.
    pub fn eval_at(
        &self,
        p: &CondensedProblem,
        x_ini: &DVector<f64>,
        theta: &DVector<f64>,
        delta: &DVector<f64>,
    ) -> f64 {
        self.f_star + self.nu.dot(&(&self.b_q - p.b(x_ini, delta)))
            + self.lambda.dot(&(&self.d_q - p.d(theta, delta)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutCounters {
    pub feas_added: usize,
    pub feas_deduped: usize,
    pub shifted_added: usize,
    pub opt_added: usize,
    pub opt_deduped: usize,
}

/// Shape a store is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreShape {
    pub horizon: usize,
    pub n_x: usize,
    pub n_c: usize,
    pub n_delta: usize,
    pub n_theta: usize,
}

impl StoreShape {
    pub fn of(p: &CondensedProblem) -> Self {
        Self {
            horizon: p.horizon,
            n_x: p.n_x,
            n_c: p.n_c,
            n_delta: p.n_delta,
            n_theta: p.n_theta,
        }
    }
}

/// Cuts retained across instances. Never pruned.
#[derive(Debug, Clone)]
pub struct CutStore {
    shape: StoreShape,
    feas: Vec<FeasibilityCut>,
    opt: Vec<OptimalityCut>,
    params: Option<(DVector<f64>, DVector<f64>)>,
    counters: CutCounters,
    feas_index: KeyIndex,
    opt_index: KeyIndex,
}

impl CutStore {
    pub fn new(p: &CondensedProblem) -> Self {
        Self::with_shape(StoreShape::of(p))
    }

    fn with_shape(shape: StoreShape) -> Self {
        Self {
            shape,
            feas: Vec::new(),
            opt: Vec::new(),
            params: None,
            counters: CutCounters::default(),
            feas_index: KeyIndex::default(),
            opt_index: KeyIndex::default(),
        }
    }

    pub fn shape(&self) -> StoreShape {
        self.shape
    }

    pub fn feasibility_cuts(&self) -> &[FeasibilityCut] {
        &self.feas
    }

    pub fn optimality_cuts(&self) -> &[OptimalityCut] {
        &self.opt
    }

    pub fn len(&self) -> usize {
        self.feas.len() + self.opt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counters(&self) -> CutCounters {
        self.counters
    }

    pub fn params(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.params.as_ref().map(|(x, t)| (x, t))
    }

    pub fn check_problem(&self, p: &CondensedProblem) -> Result<()> {
        if StoreShape::of(p) != self.shape {
            return Err(Error::DimensionMismatch(format!(
                "store shape {:?} does not match problem {:?}",
                self.shape,
                StoreShape::of(p)
            )));
        }
        Ok(())
    }

    /// Re-targets every cached offset to `(x_ini, θ)`.
    pub fn reparameterize(&mut self, p: &CondensedProblem, x_ini: &DVector<f64>, theta: &DVector<f64>) {
        if let Some((x, t)) = &self.params {
            if x == x_ini && t == theta {
                return;
            }
        }
        for c in &mut self.feas {
            c.affine.offset = ray_offset(p, &c.nu, &c.lambda, x_ini, theta);
        }
        for c in &mut self.opt {
            c.reparameterize(p, x_ini, theta);
        }
        self.params = Some((x_ini.clone(), theta.clone()));
    }

    fn feas_duplicate(&self, cut: &FeasibilityCut, k: f64) -> bool {
        let radius = MAX_WEIGHT * RAY_TOL * (cut.nu.len() + cut.lambda.len()) as f64;
        self.feas_index.near(k, radius).any(|i| {
            let o = &self.feas[i];
            (&o.nu - &cut.nu).amax() <= RAY_TOL && (&o.lambda - &cut.lambda).amax() <= RAY_TOL
        })
    }

    /// Adds `cut` unless an equivalent ray is stored.
    pub fn try_add_feasibility(&mut self, cut: FeasibilityCut) -> AddOutcome {
        let k = key(&[&cut.nu, &cut.lambda]);
        if self.feas_duplicate(&cut, k) {
            self.counters.feas_deduped += 1;
            return AddOutcome::Duplicate;
        }
        if matches!(cut.origin, CutOrigin::Shifted(_)) {
            self.counters.shifted_added += 1;
        }
        self.counters.feas_added += 1;
        self.feas_index.insert(k, self.feas.len());
        self.feas.push(cut);
        AddOutcome::Added
    }

    /// Adds `cut` unless a stored dual point lies within Euclidean `eps`.
    pub fn try_add_optimality(&mut self, cut: OptimalityCut, eps: f64) -> AddOutcome {
        let k = key(&[&cut.nu, &cut.lambda]);
        let len = (cut.nu.len() + cut.lambda.len()) as f64;
        let radius = MAX_WEIGHT * len.sqrt() * eps;
        let eps2 = eps * eps;
        let dup = self.opt_index.near(k, radius).any(|i| {
            let o = &self.opt[i];
            (&o.nu - &cut.nu).norm_squared() + (&o.lambda - &cut.lambda).norm_squared() < eps2
        });
        if dup {
            self.counters.opt_deduped += 1;
            return AddOutcome::Duplicate;
        }
        self.counters.opt_added += 1;
        self.opt_index.insert(k, self.opt.len());
        self.opt.push(cut);
        AddOutcome::Added
    }

    fn rebuild_indices(&mut self) {
        self.feas_index.clear();
        for (i, c) in self.feas.iter().enumerate() {
            self.feas_index.insert(key(&[&c.nu, &c.lambda]), i);
        }
        self.opt_index.clear();
        for (i, c) in self.opt.iter().enumerate() {
            self.opt_index.insert(key(&[&c.nu, &c.lambda]), i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mld::CartPoleParams;

    fn problem() -> CondensedProblem {
        CartPoleParams {
            horizon: 4,
            ..Default::default()
        }
        .problem()
        .unwrap()
    }

    fn ray(p: &CondensedProblem, seed: u64) -> FarkasCertificate {
        // Not a dual-cone ray; only the bookkeeping is exercised here.
        let f = |i: usize| (((i as u64 + 1) * (seed + 7)) % 13) as f64 / 13.0;
        FarkasCertificate {
            nu: DVector::from_fn(p.a.nrows(), |i, _| f(i) - 0.5),
            lambda: DVector::from_fn(p.c.nrows(), |i, _| f(i + 100)),
            lambda_lower: DVector::zeros(0),
            lambda_upper: DVector::zeros(0),
        }
    }

    fn params() -> (DVector<f64>, DVector<f64>) {
        (DVector::from_vec(vec![0.1, 0.05, 0.0, 0.2]), DVector::from_vec(vec![0.35, 0.3]))
    }

    #[test]
    fn duplicate_and_scaled_rays() {
        let p = problem();
        let (x, t) = params();
        let mut s = CutStore::new(&p);
        let c = ray(&p, 1);
        let cut = FeasibilityCut::from_certificate(&p, &c, &x, &t).unwrap();
        assert_eq!(s.try_add_feasibility(cut.clone()), AddOutcome::Added);
        assert_eq!(s.try_add_feasibility(cut), AddOutcome::Duplicate);
        let scaled = FeasibilityCut::from_certificate(&p, &c.scaled(3.0), &x, &t).unwrap();
        assert_eq!(s.try_add_feasibility(scaled), AddOutcome::Duplicate);
        let other = FeasibilityCut::from_certificate(&p, &ray(&p, 2), &x, &t).unwrap();
        assert_eq!(s.try_add_feasibility(other), AddOutcome::Added);
        assert_eq!(s.counters().feas_added, 2);
        assert_eq!(s.counters().feas_deduped, 2);
    }

    #[test]
    fn scaling_before_construction_is_invisible() {
        let p = problem();
        let (x, t) = params();
        let c = ray(&p, 4);
        let a = FeasibilityCut::from_certificate(&p, &c, &x, &t).unwrap();
        let b = FeasibilityCut::from_certificate(&p, &c.scaled(7.0), &x, &t).unwrap();
        assert!((&a.nu - &b.nu).amax() < 1e-15);
        assert!((&a.lambda - &b.lambda).amax() < 1e-15);
        assert!((&a.affine.coef - &b.affine.coef).amax() < 1e-14);
    }

    #[test]
    fn zero_lambda_has_zero_delta_coefficient() {
        let p = problem();
        let (x, t) = params();
        let mut c = ray(&p, 3);
        c.lambda.fill(0.0);
        let cut = FeasibilityCut::from_certificate(&p, &c, &x, &t).unwrap();
        assert!(cut.affine.coef.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shift_bookkeeping() {
        let p = problem();
        let (x, t) = params();
        let n = p.horizon;
        let cut = FeasibilityCut::from_certificate(&p, &ray(&p, 5), &x, &t).unwrap();
        let sh = cut.shifted(&p, n - 1, &x, &t).unwrap();
        let s = inf_norm(&cut.nu.rows((n - 1) * 4, 8).into_owned())
            .max(inf_norm(&cut.lambda.rows((n - 1) * 20, 20).into_owned()));
        assert!((sh.nu.rows(0, 8) * s - cut.nu.rows((n - 1) * 4, 8)).amax() < 1e-15);
        assert!((sh.lambda.rows(0, 20) * s - cut.lambda.rows((n - 1) * 20, 20)).amax() < 1e-15);
        assert!(sh.nu.rows(8, sh.nu.len() - 8).iter().all(|v| *v == 0.0));
        assert!(sh.lambda.rows(20, sh.lambda.len() - 20).iter().all(|v| *v == 0.0));
        assert_eq!(sh.origin, CutOrigin::Shifted(n - 1));
    }

    #[test]
    fn shift_of_stage_zero_ray_is_zero() {
        let p = problem();
        let (x, t) = params();
        let mut c = ray(&p, 6);
        for i in 4..c.nu.len() {
            c.nu[i] = 0.0;
        }
        for i in 20..c.lambda.len() {
            c.lambda[i] = 0.0;
        }
        let cut = FeasibilityCut::from_certificate(&p, &c, &x, &t).unwrap();
        assert!(matches!(cut.shifted(&p, 1, &x, &t), Err(Error::ShiftProducedZero)));
    }

    #[test]
    fn reparameterize_same_params_is_bitwise_identity() {
        let p = problem();
        let (x, t) = params();
        let mut s = CutStore::new(&p);
        s.reparameterize(&p, &x, &t);
        s.try_add_feasibility(FeasibilityCut::from_certificate(&p, &ray(&p, 1), &x, &t).unwrap());
        let before = s.feasibility_cuts().to_vec();
        s.reparameterize(&p, &x.clone(), &t.clone());
        assert_eq!(before, s.feasibility_cuts());
    }

    #[test]
    fn optimality_dedup_radius() {
        let p = problem();
        let (x, t) = params();
        let sol = QpSolution {
            x_star: DVector::zeros(p.n_vars()),
            nu_star: DVector::from_element(p.a.nrows(), 0.1),
            lambda_star: DVector::from_element(p.c.nrows(), 0.2),
            f_star: 1.0,
            iterations: 0,
        };
        let delta = DVector::zeros(p.n_bin());
        let cut = OptimalityCut::new(&p, &sol, &delta, &x, &t).unwrap();
        assert!((cut.eval(&delta) - 1.0).abs() < 1e-12);
        let mut s = CutStore::new(&p);
        assert_eq!(s.try_add_optimality(cut.clone(), 1e-3), AddOutcome::Added);
        assert_eq!(s.try_add_optimality(cut.clone(), 1e-15), AddOutcome::Duplicate);
        let mut near = cut.clone();
        near.nu[0] += 1e-4;
        assert_eq!(s.try_add_optimality(near.clone(), 1e-15), AddOutcome::Added);
        let mut near2 = near;
        near2.nu[0] += 1e-4;
        assert_eq!(s.try_add_optimality(near2, 1e-3), AddOutcome::Duplicate);
    }
}
