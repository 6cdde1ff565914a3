//! Independent verification of solved equilibria.
//!
//! Three families of checks, all decoupled from the solver internals:
//!
//! * [`residuals`] — the pointwise first-order conditions both players'
//!   policies must zero out, plus the second-order positivity diagnostic;
//! * [`mc::mc_cross_check`] — exact-lognormal Monte Carlo of the weighted
//!   state `(X, zeta)` under the reference measure, compared against the
//!   closed-form worst-case moments;
//! * [`spike::spike_quotient`] — finite-`eps` spike-variation difference
//!   quotients of the objective at `t = 0`, computed exactly through linear
//!   moment ODEs (no sampling noise in a sign test).

pub mod mc;
pub mod spike;

use serde::Serialize;

use crate::model::{AmbiguityMode, ModelSpec};
use crate::real::Real;
use crate::solution::{CoeffPath, Policy};

pub use mc::{mc_cross_check, McError, McReport};
pub use spike::{spike_ladder, spike_quotient, SpikeKind, SpikeReport};

/// Worst-node first-order residuals and the second-order floor.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// `max_t max_j |rho^zeta_j|`: the distortion-side optimality defect.
    pub max_rho_zeta: f64,
    /// `max_t max_j |rho^x_j|`: the investment-side optimality defect.
    pub max_rho_x: f64,
    /// `min_t min_j Sigma_j(t;t)`: second-order condition floor.
    pub min_sigma: f64,
}

/// Evaluate the per-unit-state first-order conditions along a solved path.
///
/// State-dependent mode:
/// `rho^zeta = E (C + D alpha) - xi1 h`,
/// `rho^x_j  = B_j Delta + D_j (C_j + D_j alpha_j) M + D_j h_j Delta + R alpha_j`.
///
/// Control-dependent mode:
/// `rho^zeta_j = E D alpha_j - xi2 l alpha_j^2 h_j`,
/// `rho^x_j    = (D^2 M + R) alpha_j + B_j Delta + D^2 (Delta E - E^2)/(xi2 l alpha_j)`.
pub fn residuals<R: Real>(
    coeffs: &CoeffPath<R>,
    policy: &Policy<R>,
    spec: &ModelSpec<R>,
) -> ResidualReport {
    let grid = &coeffs.grid;
    let xi = spec.ambiguity;
    let xil = spec.xi_ell();
    let mut max_zeta = 0.0f64;
    let mut max_x = 0.0f64;
    let mut min_sigma = f64::INFINITY;
    for k in 0..grid.len() {
        let cf = spec.coeffs_at(grid.node(k)).expect("node inside horizon");
        let node = &coeffs.nodes[k];
        let pn = &policy.nodes[k];
        let delta = node.delta();
        let e = node.e();
        for j in 0..spec.dim {
            let alpha = pn.alpha[j];
            let h = pn.distortion[j];
            let (rz, rx) = match spec.mode {
                AmbiguityMode::StateDep => {
                    let sigma = cf.state_vol[j] + cf.ctrl_vol[j] * alpha;
                    (
                        e * sigma - xi * h,
                        cf.sharpe[j] * delta
                            + cf.ctrl_vol[j] * sigma * node.m
                            + cf.ctrl_vol[j] * h * delta
                            + cf.ctrl_cost * alpha,
                    )
                }
                AmbiguityMode::CtrlDep => {
                    let d = cf.ctrl_vol[j];
                    (
                        e * d * alpha - xil * alpha * alpha * h,
                        (d * d * node.m + cf.ctrl_cost) * alpha
                            + cf.sharpe[j] * delta
                            + d * d * (delta * e - e * e) / (xil * alpha),
                    )
                }
            };
            max_zeta = max_zeta.max(rz.abs().as_f64());
            max_x = max_x.max(rx.abs().as_f64());
        }
        min_sigma = min_sigma.min(pn.sigma_min.as_f64());
    }
    ResidualReport {
        max_rho_zeta: max_zeta,
        max_rho_x: max_x,
        min_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctrldep::solve_ctrl;
    use crate::model::{benchmark_spec, TimeGrid};
    use crate::statedep::solve_state;

    #[test]
    fn residuals_vanish_on_solved_paths() {
        let grid = TimeGrid::new(1.0, 1000);
        let spec = benchmark_spec::<f64>(AmbiguityMode::StateDep, 2.0, 10.0);
        let sol = solve_state(&spec, &grid).unwrap();
        let rep = residuals(&sol.coeffs, &sol.policy, &spec);
        assert!(rep.max_rho_zeta < 1e-12, "{rep:?}");
        assert!(rep.max_rho_x < 1e-12, "{rep:?}");
        assert!(rep.min_sigma >= 0.0, "{rep:?}");

        let spec = benchmark_spec::<f64>(AmbiguityMode::CtrlDep, 2.0, 10.0);
        let sol = solve_ctrl(&spec, &grid).unwrap();
        let rep = residuals(&sol.coeffs, &sol.policy, &spec);
        assert!(rep.max_rho_zeta < 1e-12, "{rep:?}");
        assert!(rep.max_rho_x < 1e-10, "{rep:?}");
        assert!(rep.min_sigma >= 0.0, "{rep:?}");
    }

    #[test]
    fn corrupted_policy_is_detected() {
        let grid = TimeGrid::new(1.0, 500);
        let spec = benchmark_spec::<f64>(AmbiguityMode::StateDep, 2.0, 10.0);
        let mut sol = solve_state(&spec, &grid).unwrap();
        for node in &mut sol.policy.nodes {
            node.alpha[0] *= 1.01;
        }
        let rep = residuals(&sol.coeffs, &sol.policy, &spec);
        assert!(rep.max_rho_x > 1e-4, "{rep:?}");
    }
}
