use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mld::{cartpole_mld, CartPoleParams};

/// Keeps walls this far inside `(0, d_max)`.
pub const WALL_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallConfig {
    pub d_off_1: f64,
    pub d_off_2: f64,
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    pub phase: f64,
    /// Random-walk step std per control step.
    pub walk_sigma: f64,
}

impl Default for WallConfig {
    fn default() -> Self {
        Self {
            d_off_1: 0.35,
            d_off_2: 0.35,
            amplitude: 0.05,
            frequency: std::f64::consts::PI,
            phase: 0.0,
            walk_sigma: 0.002,
        }
    }
}

/// Integrated random walk of both walls.
#[derive(Debug, Clone)]
pub struct WallState {
    pub walk: [f64; 2],
    rng: ChaCha8Rng,
}

impl WallState {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { walk: [0.0; 2], rng }
    }
}

/// Wall distances at time `t`; advances the walk by one step afterwards.
pub fn wall_motion(t: f64, state: &mut WallState, cfg: &WallConfig, d_max: f64) -> (f64, f64) {
    let wave = cfg.amplitude * (cfg.frequency * t + cfg.phase).sin();
    let hi = (d_max - WALL_MARGIN).max(WALL_MARGIN);
    let d1 = (cfg.d_off_1 + wave + state.walk[0]).clamp(WALL_MARGIN, hi);
    let d2 = (cfg.d_off_2 + wave + state.walk[1]).clamp(WALL_MARGIN, hi);
    for m in &mut state.walk {
        let z: f64 = state.rng.sample(StandardNormal);
        *m += cfg.walk_sigma * z;
    }
    (d1, d2)
}

/// Linearised cart-pole with spring walls, stepped by forward Euler.
#[derive(Debug, Clone)]
pub struct Plant {
    e: DMatrix<f64>,
    f: DMatrix<f64>,
    params: CartPoleParams,
}

impl Plant {
    pub fn new(params: &CartPoleParams) -> Self {
        let sys = cartpole_mld(params);
        Self {
            e: sys.e,
            f: sys.f,
            params: params.clone(),
        }
    }

    /// Spring forces `(λ1, λ2)` for the current tip position.
    pub fn contact_forces(&self, x: &DVector<f64>, d1: f64, d2: f64) -> (f64, f64) {
        let p = &self.params;
        let tip = x[0] - p.l * x[1];
        let pen1 = tip - d1;
        let pen2 = -d2 - tip;
        (p.k1 * pen1.max(0.0), p.k2 * pen2.max(0.0))
    }

    pub fn step(&self, x: &DVector<f64>, u_force: f64, d1: f64, d2: f64, torque: f64) -> DVector<f64> {
        let p = &self.params;
        let (l1, l2) = self.contact_forces(x, d1, d2);
        let u = DVector::from_vec(vec![u_force, l1, l2]);
        let mut next = &self.e * x + &self.f * u;
        next[3] += torque / (p.l * p.m_p) * p.dt;
        next
    }
}

/// One plant step; see [`Plant::step`].
pub fn plant_step(
    x: &DVector<f64>,
    u_force: f64,
    d1: f64,
    d2: f64,
    torque: f64,
    params: &CartPoleParams,
) -> DVector<f64> {
    Plant::new(params).step(x, u_force, d1, d2, torque)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn equilibrium_stays_put() {
        let p = CartPoleParams::default();
        let x = DVector::zeros(4);
        assert_eq!(plant_step(&x, 0.0, 0.35, 0.35, 0.0, &p), x);
    }

    #[test]
    fn spring_force_from_penetration() {
        let p = CartPoleParams::default();
        let plant = Plant::new(&p);
        // tip = x1 − l·x2 = 0.36 against a wall at 0.35
        let x = DVector::from_vec(vec![0.36, 0.0, 0.0, 0.0]);
        let (l1, l2) = plant.contact_forces(&x, 0.35, 0.35);
        assert!((l1 - 0.5).abs() < 1e-12);
        assert_eq!(l2, 0.0);
    }

    #[test]
    fn contact_free_step_matches_model() {
        let p = CartPoleParams::default();
        let sys = cartpole_mld(&p);
        let x = DVector::from_vec(vec![0.1, -0.05, 0.3, 0.7]);
        let got = plant_step(&x, 2.5, 1e9, 1e9, 0.0, &p);
        let want = &sys.e * &x + &sys.f * DVector::from_vec(vec![2.5, 0.0, 0.0]);
        assert_eq!(got, want);
    }

    #[test]
    fn static_walls() {
        let cfg = WallConfig {
            amplitude: 0.0,
            walk_sigma: 0.0,
            ..Default::default()
        };
        let mut s = WallState::new(ChaCha8Rng::seed_from_u64(3));
        for k in 0..10 {
            assert_eq!(wall_motion(k as f64 * 0.1, &mut s, &cfg, 1.0), (0.35, 0.35));
        }
    }

    #[test]
    fn sinusoid_peak() {
        let cfg = WallConfig {
            amplitude: 0.1,
            frequency: 2.0 * std::f64::consts::PI,
            walk_sigma: 0.0,
            ..Default::default()
        };
        let mut s = WallState::new(ChaCha8Rng::seed_from_u64(3));
        let (d1, d2) = wall_motion(0.25, &mut s, &cfg, 1.0);
        assert!((d1 - 0.45).abs() < 1e-15 && (d2 - 0.45).abs() < 1e-15);
    }

    #[test]
    fn walk_is_cumulative_gaussian_stream() {
        let cfg = WallConfig {
            amplitude: 0.0,
            walk_sigma: 0.01,
            ..Default::default()
        };
        let mut s = WallState::new(ChaCha8Rng::seed_from_u64(9));
        let mut replay = ChaCha8Rng::seed_from_u64(9);
        let mut m = [0.0_f64; 2];
        for _ in 0..50 {
            let (d1, d2) = wall_motion(0.0, &mut s, &cfg, 1.0);
            assert_eq!(d1, (0.35 + m[0]).clamp(0.05, 0.95));
            assert_eq!(d2, (0.35 + m[1]).clamp(0.05, 0.95));
            for v in &mut m {
                let z: f64 = replay.sample(StandardNormal);
                *v += 0.01 * z;
            }
            assert_eq!(s.walk, m);
        }
    }
}
