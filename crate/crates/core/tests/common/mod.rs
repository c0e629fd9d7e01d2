#![allow(dead_code)]

use gbd_mpc::mld::{CartPoleParams, CondensedProblem};
use nalgebra::DVector;
use rand::Rng;

pub fn cartpole(horizon: usize) -> CondensedProblem {
    CartPoleParams {
        horizon,
        ..Default::default()
    }
    .problem()
    .unwrap()
}

/// A state near one of the walls, where contact plans are in play.
pub fn random_instance(rng: &mut impl Rng) -> (DVector<f64>, DVector<f64>) {
    let x = DVector::from_vec(vec![
        rng.random_range(-0.4..0.4),
        rng.random_range(-0.3..0.3),
        rng.random_range(-1.0..1.0),
        rng.random_range(-2.0..2.0),
    ]);
    let theta = DVector::from_vec(vec![rng.random_range(0.25..0.45), rng.random_range(0.25..0.45)]);
    (x, theta)
}

pub fn delta_from_bits(bits: u32, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| f64::from((bits >> j) & 1))
}

pub fn all_deltas(n: usize) -> impl Iterator<Item = DVector<f64>> {
    (0u32..(1 << n)).map(move |b| delta_from_bits(b, n))
}
