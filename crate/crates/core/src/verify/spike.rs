//! Spike-variation difference quotients at `t = 0` via exact moment ODEs.
//!
//! Perturbing one player's control on `[0, eps)` changes the objective by an
//! `O(eps)` amount whose sign the equilibrium definition constrains. Both
//! perturbed systems stay linear with deterministic coefficients, so first
//! and second moments close exactly:
//!
//! * investment spike `u + v 1_{[0,eps)}`: the perturbed and equilibrium
//!   states share the driver under the worst-case measure; the joint system
//!   `(E[X], E[X*], E[X^2], E[X*^2], E[X X*])` plus a running-cost
//!   accumulator evaluates the objective exactly,
//! * distortion spike `h + eta 1_{[0,eps)}`: the state path is unchanged but
//!   re-weighted; its moments under the perturbed measure follow linear ODEs
//!   with the drift shifted by `(C + D alpha)' eta` on `[0, eps)`.
//!
//! The perturbed and unperturbed objectives are integrated over the same
//! composite grid (a fine block on `[0, eps]`, the solver resolution after),
//! so discretization error largely cancels in the difference quotient.

use serde::Serialize;

use crate::error::SolveError;
use crate::model::{AmbiguityMode, ModelSpec};
use crate::odeint::{Rk4, StepFailure};
use crate::real::Real;
use crate::solution::Policy;

/// Which player's control is spiked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeKind {
    /// Investment spike; the quotient tends to `v' Sigma(0;0) v / 2 >= 0`.
    Investment,
    /// Distortion spike; the quotient must stay `<= 0` in the limit.
    Distortion,
}

impl SpikeKind {
    fn label(self) -> &'static str {
        match self {
            SpikeKind::Investment => "u-spike",
            SpikeKind::Distortion => "h-spike",
        }
    }
}

/// Difference-quotient ladder for one perturbation.
#[derive(Debug, Clone, Serialize)]
pub struct SpikeReport {
    pub kind: String,
    pub perturbation: Vec<f64>,
    /// Strictly decreasing ladder of window widths.
    pub epsilons: Vec<f64>,
    pub quotients: Vec<f64>,
    /// Richardson extrapolation from the two smallest windows.
    pub extrapolated: f64,
    /// Second-order prediction: `v' Sigma(0;0) v / 2` for the investment
    /// spike, `-eta' Phi(x0, u*_0) eta / 2` for the distortion spike.
    pub predicted: f64,
}

/// Steps resolving the spike window `[0, eps]`.
const WINDOW_STEPS: usize = 64;

struct PathInterp<'a, R: Real> {
    policy: &'a Policy<R>,
}

impl<'a, R: Real> PathInterp<'a, R> {
    fn eval(&self, t: R, alpha: &mut [R], h: &mut [R]) {
        let grid = &self.policy.grid;
        let dt = grid.dt();
        let k = (t / dt)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(grid.steps() - 1);
        let w = ((t - grid.node(k)) / dt).max(R::zero()).min(R::one());
        let a0 = &self.policy.nodes[k];
        let a1 = &self.policy.nodes[k + 1];
        for j in 0..alpha.len() {
            alpha[j] = a0.alpha[j] + w * (a1.alpha[j] - a0.alpha[j]);
            h[j] = a0.distortion[j] + w * (a1.distortion[j] - a0.distortion[j]);
        }
    }
}

fn segment_times<R: Real>(from: R, to: R, steps: usize) -> Vec<R> {
    (0..=steps)
        .map(|i| from + (to - from) * (R::of_count(i) / R::of_count(steps)))
        .collect()
}

fn integrate_forward<R: Real>(
    times: &[R],
    init: &[R],
    mut rhs: impl FnMut(R, &[R], &mut [R]) -> Result<(), SolveError>,
) -> Result<Vec<R>, SolveError> {
    let dim = init.len();
    let mut kernel = Rk4::new(dim);
    let mut y = init.to_vec();
    let mut next = vec![R::zero(); dim];
    for w in times.windows(2) {
        match kernel.step(&mut rhs, w[0], w[1], &y, &mut next) {
            Ok(()) => {}
            Err(StepFailure::NonFinite { stage }) => {
                return Err(SolveError::NonFiniteRhs {
                    node: 0,
                    stage,
                    t: w[0].as_f64(),
                })
            }
            Err(StepFailure::Rhs(e)) => return Err(e),
        }
        y.copy_from_slice(&next);
    }
    Ok(y)
}

/// Integrate a piecewise-smooth objective system: the spike is active on the
/// whole closed window segment `[0, eps]` (the smooth extension of the
/// `[0, eps)` integrand) and off on the tail `[eps, T]`, so neither segment
/// sees the indicator's jump at a stage point.
fn integrate_spiked<R: Real>(
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
    eps: R,
    init: &[R],
    mut rhs: impl FnMut(R, bool, &[R], &mut [R]) -> Result<(), SolveError>,
) -> Result<Vec<R>, SolveError> {
    let window = segment_times(R::zero(), eps, WINDOW_STEPS);
    let mid = integrate_forward(&window, init, |t, y, out| rhs(t, true, y, out))?;
    let tail = segment_times(eps, spec.horizon, policy.grid.steps());
    integrate_forward(&tail, &mid, |t, y, out| rhs(t, false, y, out))
}

/// Objective value under an investment spike of size `v` on `[0, eps)`.
///
/// State layout: `[E X, E X*, E X^2, E X*^2, E X X*, running cost]`, all
/// moments under the equilibrium worst-case measure.
fn objective_investment_spike<R: Real>(
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
    v: &[R],
    eps: R,
) -> Result<R, SolveError> {
    let d = spec.dim;
    let interp = PathInterp { policy };
    let xi = spec.ambiguity;
    let xil = spec.xi_ell();
    let mut alpha = vec![R::zero(); d];
    let mut h = vec![R::zero(); d];
    let two = R::of(2.0);
    let half = R::of(0.5);

    let rhs = |t: R, active: bool, y: &[R], out: &mut [R]| {
        let cf = spec.coeffs_at(t)?;
        interp.eval(t, &mut alpha, &mut h);
        let (m1, m1s, s2, s2s, s11) = (y[0], y[1], y[2], y[3], y[4]);

        let mut a_star = cf.rate; // drift of X* under the worst case
        let mut g = cf.rate; // A + C'h
        let mut th_alpha = R::zero(); // theta' alpha
        let mut th_v = R::zero(); // theta' v
        let mut sig2 = R::zero(); // |sigma|^2
        let mut sig_c = R::zero(); // sigma' C
        let mut sig_d_alpha = R::zero(); // sum sigma_j D_j alpha_j
        let mut sig_d_v = R::zero(); // sum sigma_j D_j v_j
        let mut c2 = R::zero();
        let mut cd_alpha = R::zero(); // sum C_j D_j alpha_j
        let mut cd_v = R::zero();
        let mut d2_alpha2 = R::zero(); // sum D_j^2 alpha_j^2
        let mut d2_alpha_v = R::zero();
        let mut d2_v2 = R::zero();
        let mut pen = R::zero();
        let mut eu2 = R::zero();
        for j in 0..d {
            let vv = if active { v[j] } else { R::zero() };
            let sigma = cf.state_vol[j] + cf.ctrl_vol[j] * alpha[j];
            let theta = cf.sharpe[j] + cf.ctrl_vol[j] * h[j];
            a_star += cf.sharpe[j] * alpha[j] + sigma * h[j];
            g += cf.state_vol[j] * h[j];
            th_alpha += theta * alpha[j];
            th_v += theta * vv;
            sig2 += sigma * sigma;
            sig_c += sigma * cf.state_vol[j];
            sig_d_alpha += sigma * cf.ctrl_vol[j] * alpha[j];
            sig_d_v += sigma * cf.ctrl_vol[j] * vv;
            c2 += cf.state_vol[j] * cf.state_vol[j];
            cd_alpha += cf.state_vol[j] * cf.ctrl_vol[j] * alpha[j];
            cd_v += cf.state_vol[j] * cf.ctrl_vol[j] * vv;
            d2_alpha2 += cf.ctrl_vol[j] * cf.ctrl_vol[j] * alpha[j] * alpha[j];
            d2_alpha_v += cf.ctrl_vol[j] * cf.ctrl_vol[j] * alpha[j] * vv;
            d2_v2 += cf.ctrl_vol[j] * cf.ctrl_vol[j] * vv * vv;
            let eu2_j = alpha[j] * alpha[j] * s2s + two * alpha[j] * vv * m1s + vv * vv;
            eu2 += eu2_j;
            match spec.mode {
                AmbiguityMode::StateDep => pen += xi * h[j] * h[j] * s2,
                AmbiguityMode::CtrlDep => pen += xil * h[j] * h[j] * eu2_j,
            }
        }

        out[0] = g * m1 + th_alpha * m1s + th_v;
        out[1] = a_star * m1s;
        out[2] = (two * g + c2) * s2
            + two * (th_alpha + cd_alpha) * s11
            + d2_alpha2 * s2s
            + two * (th_v + cd_v) * m1
            + two * d2_alpha_v * m1s
            + d2_v2;
        out[3] = (two * a_star + sig2) * s2s;
        out[4] = (g + a_star + sig_c) * s11
            + (th_alpha + sig_d_alpha) * s2s
            + (th_v + sig_d_v) * m1s;
        out[5] = half * (cf.state_cost * s2 + cf.ctrl_cost * eu2 - pen);
        Ok(())
    };

    let x0 = spec.x0;
    let init = [x0, x0, x0 * x0, x0 * x0, x0 * x0, R::zero()];
    let y = integrate_spiked(spec, policy, eps, &init, rhs)?;
    let (m1, s2, jrun) = (y[0], y[2], y[5]);
    Ok(jrun + half * spec.terminal_weight * s2
        - half * spec.variance_weight * m1 * m1
        - spec.risk_aversion * x0 * m1)
}

/// Objective value under a distortion spike of size `eta` on `[0, eps)`.
/// State layout: `[E X*, E X*^2, running cost]` under the perturbed measure.
fn objective_distortion_spike<R: Real>(
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
    eta: &[R],
    eps: R,
) -> Result<R, SolveError> {
    let d = spec.dim;
    let interp = PathInterp { policy };
    let xi = spec.ambiguity;
    let xil = spec.xi_ell();
    let mut alpha = vec![R::zero(); d];
    let mut h = vec![R::zero(); d];
    let two = R::of(2.0);
    let half = R::of(0.5);

    let rhs = |t: R, active: bool, y: &[R], out: &mut [R]| {
        let cf = spec.coeffs_at(t)?;
        interp.eval(t, &mut alpha, &mut h);
        let mut drift = cf.rate;
        let mut sig2 = R::zero();
        let mut alpha2 = R::zero();
        let mut pen = R::zero();
        for j in 0..d {
            let hp = h[j] + if active { eta[j] } else { R::zero() };
            let sigma = cf.state_vol[j] + cf.ctrl_vol[j] * alpha[j];
            drift += cf.sharpe[j] * alpha[j] + sigma * hp;
            sig2 += sigma * sigma;
            alpha2 += alpha[j] * alpha[j];
            match spec.mode {
                AmbiguityMode::StateDep => pen += xi * hp * hp,
                AmbiguityMode::CtrlDep => pen += xil * hp * hp * alpha[j] * alpha[j],
            }
        }
        out[0] = drift * y[0];
        out[1] = (two * drift + sig2) * y[1];
        out[2] = half * (cf.state_cost + cf.ctrl_cost * alpha2 - pen) * y[1];
        Ok(())
    };

    let x0 = spec.x0;
    let init = [x0, x0 * x0, R::zero()];
    let y = integrate_spiked(spec, policy, eps, &init, rhs)?;
    let (m, s, jrun) = (y[0], y[1], y[2]);
    Ok(jrun + half * spec.terminal_weight * s
        - half * spec.variance_weight * m * m
        - spec.risk_aversion * x0 * m)
}

/// Difference quotient `(J(perturbed) - J(equilibrium)) / eps` at `t = 0`.
pub fn spike_quotient<R: Real>(
    kind: SpikeKind,
    perturbation: &[R],
    eps: R,
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
) -> Result<f64, SolveError> {
    assert_eq!(perturbation.len(), spec.dim, "perturbation dimension");
    assert!(
        eps > R::zero() && eps < spec.horizon,
        "eps must lie in (0, T)"
    );
    let zero = vec![R::zero(); spec.dim];
    let (j_pert, j_base) = match kind {
        SpikeKind::Investment => (
            objective_investment_spike(spec, policy, perturbation, eps)?,
            objective_investment_spike(spec, policy, &zero, eps)?,
        ),
        SpikeKind::Distortion => (
            objective_distortion_spike(spec, policy, perturbation, eps)?,
            objective_distortion_spike(spec, policy, &zero, eps)?,
        ),
    };
    Ok(((j_pert - j_base) / eps).as_f64())
}

/// Second-order prediction of the quotient limit.
pub fn predicted_limit<R: Real>(
    kind: SpikeKind,
    perturbation: &[R],
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
) -> f64 {
    let cf = spec.coeffs_at(R::zero()).expect("t = 0 in domain");
    let p00 = policy.nodes[0].p_tt;
    let half = R::of(0.5);
    let mut acc = R::zero();
    for j in 0..spec.dim {
        match kind {
            SpikeKind::Investment => {
                let sigma_j = match spec.mode {
                    AmbiguityMode::StateDep => {
                        cf.ctrl_cost + cf.ctrl_vol[j] * cf.ctrl_vol[j] * p00
                    }
                    AmbiguityMode::CtrlDep => {
                        let h0 = policy.nodes[0].distortion[j];
                        cf.ctrl_cost - spec.xi_ell() * h0 * h0
                            + cf.ctrl_vol[j] * cf.ctrl_vol[j] * p00
                    }
                };
                acc += half * sigma_j * perturbation[j] * perturbation[j];
            }
            SpikeKind::Distortion => {
                let phi_j = match spec.mode {
                    AmbiguityMode::StateDep => spec.ambiguity * spec.x0 * spec.x0,
                    AmbiguityMode::CtrlDep => {
                        let u0 = policy.nodes[0].alpha[j] * spec.x0;
                        spec.xi_ell() * u0 * u0
                    }
                };
                acc -= half * phi_j * perturbation[j] * perturbation[j];
            }
        }
    }
    acc.as_f64()
}

/// Evaluate the quotient over a decreasing `eps` ladder.
pub fn spike_ladder<R: Real>(
    kind: SpikeKind,
    perturbation: &[R],
    epsilons: &[R],
    spec: &ModelSpec<R>,
    policy: &Policy<R>,
) -> Result<SpikeReport, SolveError> {
    assert!(
        epsilons.windows(2).all(|w| w[1] < w[0]),
        "epsilon ladder must be strictly decreasing"
    );
    let mut quotients = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        quotients.push(spike_quotient(kind, perturbation, eps, spec, policy)?);
    }
    let extrapolated = if quotients.len() >= 2 {
        let n = quotients.len();
        let (e_prev, e_last) = (epsilons[n - 2].as_f64(), epsilons[n - 1].as_f64());
        let (q_prev, q_last) = (quotients[n - 2], quotients[n - 1]);
        q_last + (q_last - q_prev) * e_last / (e_prev - e_last)
    } else {
        quotients[0]
    };
    Ok(SpikeReport {
        kind: kind.label().to_string(),
        perturbation: perturbation.iter().map(|v| v.as_f64()).collect(),
        epsilons: epsilons.iter().map(|e| e.as_f64()).collect(),
        quotients,
        extrapolated,
        predicted: predicted_limit(kind, perturbation, spec, policy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctrldep::solve_ctrl;
    use crate::model::{benchmark_spec, TimeGrid};
    use crate::statedep::solve_state;

    fn state_setup() -> (crate::model::ModelSpec<f64>, Policy<f64>) {
        let spec = benchmark_spec(AmbiguityMode::StateDep, 2.0, 10.0);
        let grid = TimeGrid::new(1.0, 2000);
        let sol = solve_state(&spec, &grid).unwrap();
        (spec, sol.policy)
    }

    #[test]
    fn zero_perturbation_gives_zero_quotient() {
        let (spec, policy) = state_setup();
        let q = spike_quotient(SpikeKind::Investment, &[0.0], 1e-3, &spec, &policy).unwrap();
        assert_eq!(q, 0.0);
        let q = spike_quotient(SpikeKind::Distortion, &[0.0], 1e-3, &spec, &policy).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn investment_quotient_converges_to_second_order_prediction() {
        let (spec, policy) = state_setup();
        let report = spike_ladder(
            SpikeKind::Investment,
            &[1.0],
            &[1e-2, 1e-3, 1e-4],
            &spec,
            &policy,
        )
        .unwrap();
        let rel = |q: f64| (q - report.predicted).abs() / report.predicted.abs();
        // Linear-in-eps approach to the limit: each decade shrinks the
        // deviation by roughly ten.
        let r2 = rel(report.quotients[0]) / rel(report.quotients[1]);
        assert!((6.0..=15.0).contains(&r2), "decade ratio {r2}");
        assert!(rel(report.quotients[2]) < 1e-3);
        assert!((report.extrapolated - report.predicted).abs() / report.predicted < 1e-3);
    }

    #[test]
    fn distortion_quotient_is_nonpositive_and_matches_penalty() {
        let (spec, policy) = state_setup();
        for &eta in &[0.25, -0.25, 0.5, -0.5, 1.0, -1.0] {
            let q = spike_quotient(SpikeKind::Distortion, &[eta], 1e-4, &spec, &policy).unwrap();
            assert!(q <= 1e-6, "eta = {eta}: quotient {q}");
            let pred = predicted_limit(SpikeKind::Distortion, &[eta], &spec, &policy);
            assert!((q - pred).abs() <= 1e-2 * pred.abs(), "eta = {eta}: {q} vs {pred}");
        }
    }

    #[test]
    fn ctrl_mode_spikes() {
        let spec = benchmark_spec(AmbiguityMode::CtrlDep, 2.0, 10.0);
        let grid = TimeGrid::new(1.0, 2000);
        let sol = solve_ctrl(&spec, &grid).unwrap();
        let report = spike_ladder(
            SpikeKind::Investment,
            &[1.0],
            &[1e-3, 1e-4],
            &spec,
            &sol.policy,
        )
        .unwrap();
        let rel = (report.quotients[1] - report.predicted).abs() / report.predicted.abs();
        assert!(rel < 1e-3, "quotients {:?} vs {}", report.quotients, report.predicted);

        let q = spike_quotient(SpikeKind::Distortion, &[0.5], 1e-4, &spec, &sol.policy).unwrap();
        assert!(q <= 1e-6);
    }
}
