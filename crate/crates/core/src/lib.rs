//! Adaptive horizon model predictive control.
//!
//! The crate is organised bottom-up:
//!
//! * [`poly`]: truncated multivariate polynomial (jet) algebra in a fixed
//!   graded-lexicographic monomial order.
//! * [`albrekht`]: discrete Riccati solver and the degree-by-degree power
//!   series for the optimal cost and feedback.
//! * [`sos`]: extension of a series cost to a sum of squares.
//! * [`ocp`]: single-shooting finite horizon optimal control with box
//!   constrained controls.
//! * [`plant`]: the damped double pendulum benchmark.
//! * [`ahmpc`]: the adaptive horizon controller and closed-loop simulator.

pub mod ahmpc;
pub mod albrekht;
pub mod model;
pub mod numeric;
pub mod ocp;
pub mod plant;
pub mod poly;
pub mod sos;
