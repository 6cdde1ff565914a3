//! Equilibrium solvers for robust time-inconsistent linear-quadratic
//! stochastic control under drift ambiguity.
//!
//! The state is one-dimensional wealth driven by `d` Brownian factors. An
//! investor picks a linear investment rule `u_t = alpha_t * X_t`, an imaginary
//! adversary picks a drift distortion `h_t` (a Girsanov kernel), and both act
//! without preference ordering. Open-loop Nash policies are characterized by
//! a six-variable backward ODE system `(L, H, F, M, N, Gamma)` whose
//! combinations `Delta = M - N - Gamma` and `E = 2L - H - F` drive the
//! closed-form equilibrium rules:
//!
//! * state-dependent ambiguity penalty `xi1 * X^2` — [`statedep`],
//! * control-dependent ambiguity penalty `xi2 * l * u_j^2` — [`ctrldep`].
//!
//! [`baseline`] carries the non-robust (ambiguity-neutral) equilibria used as
//! large-`xi` limits, [`mv`] terminal mean/variance analytics and frontier
//! sweeps, [`verify`] independent equilibrium checks (first-order residuals,
//! change-of-measure Monte Carlo, spike-variation difference quotients), and
//! `certify_state` / `certify_ctrl` numerical well-posedness certificates
//! built from truncation envelopes.
//!
//! All numerical kernels are generic over the scalar type via [`Real`]
//! (`f32` or `f64`); concrete `f64` aliases are exported at the crate root.

pub mod baseline;
pub mod cert;
pub mod ctrldep;
pub mod error;
pub mod model;
pub mod mv;
pub mod odeint;
pub mod quad;
pub mod real;
pub mod solution;
pub mod statedep;
pub mod verify;

pub use crate::error::SolveError;
pub use crate::real::Real;

/// Default working precision.
pub type Scalar = f64;

pub type Schedule = model::Schedule<Scalar>;
pub type ModelSpec = model::ModelSpec<Scalar>;
pub type TimeGrid = model::TimeGrid<Scalar>;
pub type CoeffPath = solution::CoeffPath<Scalar>;
pub type Policy = solution::Policy<Scalar>;
pub type Solution = solution::Solution<Scalar>;
pub type BaselinePath = baseline::BaselinePath<Scalar>;
pub type FrontierPoint = mv::FrontierPoint<Scalar>;
