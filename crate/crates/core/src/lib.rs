//! Hybrid model-predictive control through generalized Benders decomposition.
//!
//! The MPC problem of a mixed-logic-dynamic system is split into a binary
//! master problem over the mode sequence and a convex QP subproblem over the
//! continuous trajectory. Feasibility cuts come from Farkas certificates of
//! the subproblem's linear constraints, optimality cuts from its dual optimum.
//! Cuts are independent of the initial state and environment parameters up
//! to an affine offset, so a [`cuts::CutStore`] can be carried from one MPC
//! step to the next and re-parameterized instead of rebuilt.
//!
//! Module map:
//! - [`lp`]: dense simplex with certificates, [`qp`]: active-set QP.
//! - [`mld`]: MLD systems, horizon condensing, the cart-pole model.
//! - [`cuts`], [`master`], [`gbd`]: the decomposition itself.
//! - [`bench`]: closed-loop cart-pole benchmark and the solver registry.

pub mod bench;
pub mod cuts;
pub mod error;
pub mod gbd;
pub mod linalg;
pub mod lp;
pub mod master;
pub mod mld;
pub mod qp;

pub use error::{Error, Result};
