//! State-dependent ambiguity aversion: equilibrium solver and certificate.
//!
//! The adversary pays `xi1 * X^2` per unit of squared distortion, so the
//! worst case scales with wealth. With `Delta = M - N - Gamma` and
//! `E = 2L - H - F` the equilibrium pair is
//!
//! ```text
//! alpha* = -[R + (M + Delta E / xi1) D'D]^{-1} [(M + Delta E / xi1) D'C + B Delta]
//! h*     = (E / xi1) (C + D alpha*)
//! ```
//!
//! and the six coefficients close under a backward ODE system integrated
//! here with `h*` eliminated algebraically (fewer floating-point paths, one
//! source of truth for the distortion).

use crate::cert::{Certificate, Margin, NamedValue};
use crate::error::{ConstantsError, SolveError};
use crate::model::{AmbiguityMode, Coeffs, ModelSpec, TimeGrid};
use crate::odeint::{integrate_backward, BackwardProblem};
use crate::quad::{cumulative_to_end, linear_terminal_ode};
use crate::real::Real;
use crate::solution::{CoeffNode, CoeffPath, Policy, PolicyNode, Solution, SolveInfo};

/// Condition-estimate guard for the investment-rule matrix.
const COND_LIMIT: f64 = 1e12;

/// Equilibrium investment at one node.
///
/// The matrix `R + (M + Delta E/xi1) D'D` is diagonal under per-driver
/// control loadings, so the symmetric solve reduces to componentwise division
/// guarded by a condition estimate (max/min absolute diagonal entry).
pub fn alpha_state<R: Real>(
    t: R,
    cf: &Coeffs<R>,
    m: R,
    delta: R,
    e: R,
    xi1: R,
) -> Result<Vec<R>, SolveError> {
    let m_eff = m + delta * e / xi1;
    let mut w_min = R::infinity();
    let mut w_max = R::zero();
    let d = cf.ctrl_vol.len();
    let mut alpha = vec![R::zero(); d];
    for j in 0..d {
        let w = cf.ctrl_cost + m_eff * cf.ctrl_vol[j] * cf.ctrl_vol[j];
        w_min = w_min.min(w.abs());
        w_max = w_max.max(w.abs());
        alpha[j] = -(m_eff * cf.ctrl_vol[j] * cf.state_vol[j] + cf.sharpe[j] * delta) / w;
    }
    let cond = (w_max / w_min).as_f64();
    if !cond.is_finite() || cond > COND_LIMIT || w_min == R::zero() {
        return Err(SolveError::IllConditioned {
            t: t.as_f64(),
            cond,
        });
    }
    Ok(alpha)
}

/// Worst-case distortion `h* = (E / xi1)(C + D alpha*)`, componentwise.
pub fn h_state<R: Real>(alpha: &[R], e: R, cf: &Coeffs<R>, xi1: R) -> Vec<R> {
    alpha
        .iter()
        .zip(cf.state_vol.iter().zip(cf.ctrl_vol.iter()))
        .map(|(&a, (&c, &d))| e / xi1 * (c + d * a))
        .collect()
}

/// Time derivatives of `(L, H, F, M, N, Gamma)` with the distortion
/// eliminated through its closed form.
pub fn rhs_state<R: Real>(
    t: R,
    node: &CoeffNode<R>,
    spec: &ModelSpec<R>,
) -> Result<[R; 6], SolveError> {
    let cf = spec.coeffs_at(t)?;
    let xi1 = spec.ambiguity;
    let delta = node.delta();
    let e = node.e();
    let alpha = alpha_state(t, &cf, node.m, delta, e, xi1)?;

    let two = R::of(2.0);
    let half = R::of(0.5);
    let mut b_alpha = R::zero(); // B' alpha
    let mut s2 = R::zero(); // |C + D alpha|^2
    let mut alpha2 = R::zero(); // |alpha|^2
    let mut cross_m = R::zero(); // (2C + D alpha)'(C + D alpha)
    let mut c_sigma = R::zero(); // C'(C + D alpha)
    for j in 0..cf.sharpe.len() {
        let sigma = cf.state_vol[j] + cf.ctrl_vol[j] * alpha[j];
        b_alpha += cf.sharpe[j] * alpha[j];
        s2 += sigma * sigma;
        alpha2 += alpha[j] * alpha[j];
        cross_m += (two * cf.state_vol[j] + cf.ctrl_vol[j] * alpha[j]) * sigma;
        c_sigma += cf.state_vol[j] * sigma;
    }

    let a = cf.rate;
    let growth = a + b_alpha;
    let dl = -(two * growth + (two * e / xi1 + R::one()) * s2) * node.l
        - half * cf.state_cost
        - half * cf.ctrl_cost * alpha2
        + e * e * s2 / (two * xi1);
    let dh = -(two * growth + two * s2 * e / xi1) * node.h;
    let df = -(growth + s2 * e / xi1) * node.f;
    let dm = -(two * a + b_alpha + cross_m * e / xi1 + c_sigma) * node.m - cf.state_cost
        + e * e * s2 / xi1;
    let dn = -(two * a + b_alpha + cross_m * e / xi1) * node.n;
    let dgamma = -(a + c_sigma * e / xi1) * node.gamma;
    Ok([dl, dh, df, dm, dn, dgamma])
}

/// Terminal condition shared by both modes: `(G/2, nu, mu1, G, nu, mu1)`.
pub fn terminal_node<R: Real>(spec: &ModelSpec<R>) -> [R; 6] {
    [
        R::of(0.5) * spec.terminal_weight,
        spec.variance_weight,
        spec.risk_aversion,
        spec.terminal_weight,
        spec.variance_weight,
        spec.risk_aversion,
    ]
}

/// Second-order adjoint diagonal `P(t; t)` at every grid node, given the
/// solved distortion path.
///
/// `P(t;t) = Gt exp(int_t^T (2A + 2C'h* + |C|^2)) + int_t^T exp(...)(forcing)`
/// where `Gt = G` when `C` is identically zero and `G - nu` otherwise, and
/// the forcing is `Q - xi1 |h*|^2` in state-dependent mode but plain `Q` in
/// control-dependent mode (the penalty there has no second state derivative).
pub fn p_second_order<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    distortion: &[Vec<R>],
) -> Vec<R> {
    let sampled = spec.sample(grid).expect("grid within horizon");
    let two = R::of(2.0);
    let n = grid.len();
    let mut coeff = vec![R::zero(); n];
    let mut forcing = vec![R::zero(); n];
    for k in 0..n {
        let mut ch = R::zero();
        let mut c2 = R::zero();
        let mut h2 = R::zero();
        for j in 0..spec.dim {
            let c = sampled.state_vol[j][k];
            let h = distortion[k][j];
            ch += c * h;
            c2 += c * c;
            h2 += h * h;
        }
        coeff[k] = two * sampled.rate[k] + two * ch + c2;
        forcing[k] = match spec.mode {
            AmbiguityMode::StateDep => sampled.state_cost[k] - spec.ambiguity * h2,
            AmbiguityMode::CtrlDep => sampled.state_cost[k],
        };
    }
    let g_term = if spec.state_vol_is_zero() {
        spec.terminal_weight
    } else {
        spec.terminal_weight - spec.variance_weight
    };
    linear_terminal_ode(grid, &coeff, &forcing, g_term)
}

/// Smallest diagonal entry of `Sigma(t;t) = R + D' P(t;t) D` at one node.
fn sigma_min_state<R: Real>(cf: &Coeffs<R>, p: R) -> R {
    cf.ctrl_vol
        .iter()
        .map(|&d| cf.ctrl_cost + d * d * p)
        .fold(R::infinity(), R::min)
}

/// Solve the state-dependent equilibrium on `grid`.
pub fn solve_state<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
) -> Result<Solution<R>, SolveError> {
    assert_eq!(
        spec.mode,
        AmbiguityMode::StateDep,
        "solve_state expects a state-dependent spec"
    );
    let path = integrate_backward(BackwardProblem {
        dim: 6,
        terminal: terminal_node(spec).to_vec(),
        grid: *grid,
        rhs: |t: R, y: &[R], out: &mut [R]| {
            let node = CoeffNode::from_slice(y);
            let d = rhs_state(t, &node, spec)?;
            out.copy_from_slice(&d);
            Ok(())
        },
    })?;

    let nodes: Vec<CoeffNode<R>> = path.iter().map(|y| CoeffNode::from_slice(y)).collect();
    let xi1 = spec.ambiguity;
    let mut alphas = Vec::with_capacity(nodes.len());
    let mut distortions = Vec::with_capacity(nodes.len());
    for (k, node) in nodes.iter().enumerate() {
        let t = grid.node(k);
        let cf = spec.coeffs_at(t)?;
        let alpha = alpha_state(t, &cf, node.m, node.delta(), node.e(), xi1)?;
        let h = h_state(&alpha, node.e(), &cf, xi1);
        alphas.push(alpha);
        distortions.push(h);
    }
    let p = p_second_order(spec, grid, &distortions);
    let mut policy_nodes = Vec::with_capacity(nodes.len());
    for k in 0..nodes.len() {
        let cf = spec.coeffs_at(grid.node(k))?;
        policy_nodes.push(PolicyNode {
            alpha: alphas[k].clone(),
            distortion: distortions[k].clone(),
            p_tt: p[k],
            sigma_min: sigma_min_state(&cf, p[k]),
        });
    }
    Ok(Solution {
        coeffs: CoeffPath {
            grid: *grid,
            nodes,
        },
        policy: Policy {
            grid: *grid,
            nodes: policy_nodes,
        },
        info: SolveInfo::default(),
    })
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

/// Truncation constants for the state-dependent certificate.
#[derive(Debug, Clone, Copy)]
pub struct StateCertConstants<R: Real> {
    pub m_lower: R,
    pub m_upper: R,
    pub delta_lower: R,
    pub e_lower: R,
}

impl<R: Real> StateCertConstants<R> {
    /// Small-horizon defaults: `eps0 = min(1/2, mu1)` and
    /// `m_lower/m_upper = (1 -/+ eps0) G`, `delta_lower = e_lower =
    /// (G - nu - mu1) - eps0 G`.
    pub fn defaults(spec: &ModelSpec<R>) -> Self {
        let g = spec.terminal_weight;
        let eps0 = R::of(0.5).min(spec.risk_aversion);
        let gap = g - spec.variance_weight - spec.risk_aversion;
        Self {
            m_lower: (R::one() - eps0) * g,
            m_upper: (R::one() + eps0) * g,
            delta_lower: gap - eps0 * g,
            e_lower: gap - eps0 * g,
        }
    }

    fn check(&self, spec: &ModelSpec<R>) -> Result<(), ConstantsError> {
        let g = spec.terminal_weight;
        let gap = g - spec.variance_weight - spec.risk_aversion;
        if !(self.m_lower > R::zero() && self.m_lower <= g && g <= self.m_upper) {
            return Err(ConstantsError::new(format!(
                "0 < m_lower <= G <= m_upper violated (m_lower = {}, G = {}, m_upper = {})",
                self.m_lower, g, self.m_upper
            )));
        }
        if !(self.delta_lower <= gap && gap <= R::zero()) {
            return Err(ConstantsError::new(format!(
                "delta_lower <= G - nu - mu1 <= 0 violated (delta_lower = {}, gap = {})",
                self.delta_lower, gap
            )));
        }
        if !(self.e_lower <= gap && gap <= R::zero()) {
            return Err(ConstantsError::new(format!(
                "e_lower <= G - nu - mu1 <= 0 violated (e_lower = {}, gap = {})",
                self.e_lower, gap
            )));
        }
        Ok(())
    }
}

/// Evaluate the state-dependent well-posedness certificate.
///
/// The envelope side is computed from the truncation constants alone; the
/// admissibility side (`R + D'PD >= 0`) additionally requires the solved
/// distortion path and is marked unevaluable if the solve itself fails.
pub fn certify_state<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    constants: Option<StateCertConstants<R>>,
) -> Result<Certificate, ConstantsError> {
    let cs = constants.unwrap_or_else(|| StateCertConstants::defaults(spec));
    cs.check(spec)?;
    let sampled = spec.sample(grid).expect("grid within horizon");
    let xi1 = spec.ambiguity;
    let n = grid.len();
    let d = spec.dim;
    let two = R::of(2.0);
    let half = R::of(0.5);
    let three = R::of(3.0);

    // Solution-independent drift/forcing bounds, nodewise.
    let mde = cs.m_upper + cs.delta_lower * cs.e_lower / xi1;
    let mut tau = R::infinity();
    let mut u_l1 = vec![R::zero(); n];
    let mut u_l0 = vec![R::zero(); n];
    let mut v_l1 = vec![R::zero(); n];
    let mut v_l0 = vec![R::zero(); n];
    let mut u_h1 = vec![R::zero(); n];
    let mut v_h1 = vec![R::zero(); n];
    let mut u_f1 = vec![R::zero(); n];
    let mut v_f1 = vec![R::zero(); n];
    let mut u_m1 = vec![R::zero(); n];
    let mut u_m0 = vec![R::zero(); n];
    let mut v_m1 = vec![R::zero(); n];
    let mut v_m0 = vec![R::zero(); n];
    let mut u_n1 = vec![R::zero(); n];
    let mut v_n1 = vec![R::zero(); n];
    let mut u_g1 = vec![R::zero(); n];
    let mut v_g1 = vec![R::zero(); n];

    for k in 0..n {
        let a = sampled.rate[k];
        let q = sampled.state_cost[k];
        let r = sampled.ctrl_cost[k];
        let mut qb = R::zero(); // B' W_lo^{-1} B
        let mut qc = R::zero(); // C' D W_lo^{-1} D' C
        let mut qc_hi = R::zero(); // C' D W_hi^{-1} D' C
        let mut qbd = R::zero(); // B' W_lo^{-1} D'D W_lo^{-1} B
        let mut qcd = R::zero();
        let mut qbr = R::zero();
        let mut qcr = R::zero();
        let mut s_c = R::zero(); // |C|^2
        for j in 0..d {
            let b = sampled.sharpe[j][k];
            let c = sampled.state_vol[j][k];
            let dv = sampled.ctrl_vol[j][k];
            let w_lo = r + cs.m_lower * dv * dv;
            let w_hi = r + mde * dv * dv;
            tau = tau.min(w_lo);
            qb += b * b / w_lo;
            qc += c * c * dv * dv / w_lo;
            qc_hi += c * c * dv * dv / w_hi;
            qbd += b * b * dv * dv / (w_lo * w_lo);
            qcd += c * c * dv * dv * dv * dv / (w_lo * w_lo);
            qbr += b * b * r / (w_lo * w_lo);
            qcr += c * c * dv * dv * r / (w_lo * w_lo);
            s_c += c * c;
        }
        let b_lo = -mde * (qb + qc) * half;
        let b_hi = mde * (qb + qc) * half - cs.delta_lower * qb;
        let c_lo = -mde * qc + cs.delta_lower * (qb + qc) * half;
        let c_hi = -cs.m_lower * qc_hi - cs.delta_lower * (qb + qc) * half;
        let d_hi = two * cs.delta_lower * cs.delta_lower * qbd + two * mde * mde * qcd;
        let r_hi = two * cs.delta_lower * cs.delta_lower * qbr + two * mde * mde * qcr;
        let core = s_c + two * c_hi + d_hi;
        let e_lo = cs.e_lower;

        u_l1[k] = two * a + two * b_lo + two * e_lo * core / xi1;
        u_l0[k] = half * q - e_lo * e_lo * core / (two * xi1);
        v_l1[k] = two * a + two * b_hi + core;
        v_l0[k] = half * q + half * r_hi;
        u_h1[k] = two * a + two * b_lo + two * e_lo * core / xi1;
        v_h1[k] = two * a + two * b_hi;
        u_f1[k] = a + b_lo + e_lo * core / xi1;
        v_f1[k] = a + b_hi;
        u_m1[k] = two * a
            + b_lo
            + e_lo * (two * s_c + three * c_hi + d_hi).max(R::zero()) / xi1
            + s_c
            + c_lo;
        u_m0[k] = q - e_lo * e_lo * core / xi1;
        v_m1[k] = two * a + b_hi + e_lo * (two * s_c + three * c_lo).min(R::zero()) / xi1 + s_c + c_hi;
        v_m0[k] = q;
        u_n1[k] = two * a + b_lo + e_lo * (two * s_c + three * c_hi + d_hi).max(R::zero()) / xi1;
        v_n1[k] = two * a + b_hi + e_lo * (two * s_c + three * c_lo).min(R::zero()) / xi1;
        u_g1[k] = a + e_lo * (s_c + c_hi).max(R::zero()) / xi1;
        v_g1[k] = a + e_lo * (s_c + c_lo).min(R::zero()) / xi1;
    }

    let zero = vec![R::zero(); n];
    let g = spec.terminal_weight;
    let nu = spec.variance_weight;
    let mu1 = spec.risk_aversion;
    let l_lo = linear_terminal_ode(grid, &u_l1, &u_l0, half * g);
    let l_hi = linear_terminal_ode(grid, &v_l1, &v_l0, half * g);
    let m_lo = linear_terminal_ode(grid, &u_m1, &u_m0, g);
    let m_hi = linear_terminal_ode(grid, &v_m1, &v_m0, g);
    let n_lo = linear_terminal_ode(grid, &u_n1, &zero, nu);
    let n_hi = linear_terminal_ode(grid, &v_n1, &zero, nu);
    let g_lo = linear_terminal_ode(grid, &u_g1, &zero, mu1);
    let g_hi = linear_terminal_ode(grid, &v_g1, &zero, mu1);
    let h_lo = linear_terminal_ode(grid, &u_h1, &zero, nu);
    let h_hi = linear_terminal_ode(grid, &v_h1, &zero, nu);
    let f_lo = linear_terminal_ode(grid, &u_f1, &zero, mu1);
    let f_hi = linear_terminal_ode(grid, &v_f1, &zero, mu1);

    let per_node = |f: &dyn Fn(usize) -> R| (0..n).map(f).collect::<Vec<R>>();
    let mut margins = vec![
        Margin::from_slacks("L_lower_nonnegative", grid, &l_lo),
        Margin::from_slacks(
            "M_lower_above_m_lower",
            grid,
            &per_node(&|k| m_lo[k] - cs.m_lower),
        ),
        Margin::from_slacks(
            "M_upper_below_m_upper",
            grid,
            &per_node(&|k| cs.m_upper - m_hi[k]),
        ),
        Margin::from_slacks(
            "delta_upper_nonpositive",
            grid,
            &per_node(&|k| -(m_hi[k] - n_lo[k] - g_lo[k])),
        ),
        Margin::from_slacks(
            "delta_lower_above_bound",
            grid,
            &per_node(&|k| m_lo[k] - n_hi[k] - g_hi[k] - cs.delta_lower),
        ),
        Margin::from_slacks(
            "e_upper_nonpositive",
            grid,
            &per_node(&|k| -(two * l_hi[k] - h_lo[k] - f_lo[k])),
        ),
        Margin::from_slacks(
            "e_lower_above_bound",
            grid,
            &per_node(&|k| two * l_lo[k] - h_hi[k] - f_hi[k] - cs.e_lower),
        ),
    ];
    margins.push(Margin {
        name: "investment_matrix_uniformly_pd".into(),
        satisfied: tau > R::zero(),
        slack: tau.as_f64(),
        worst_time: f64::NAN,
    });

    // Admissibility: R + D' P(t;t) D >= 0 along the solved policy.
    let mut note = None;
    match solve_state(spec, grid) {
        Ok(sol) => {
            let slacks: Vec<R> = sol.policy.nodes.iter().map(|p| p.sigma_min).collect();
            margins.push(Margin::from_slacks("second_order_condition", grid, &slacks));
        }
        Err(e) => {
            margins.push(Margin::scalar("second_order_condition", f64::NAN, f64::NAN));
            note = Some(format!("second-order condition unevaluated: solve failed: {e}"));
        }
    }

    let constants = vec![
        NamedValue::new("m_lower", cs.m_lower.as_f64()),
        NamedValue::new("m_upper", cs.m_upper.as_f64()),
        NamedValue::new("delta_lower", cs.delta_lower.as_f64()),
        NamedValue::new("e_lower", cs.e_lower.as_f64()),
        NamedValue::new("tau", tau.as_f64()),
    ];
    let mut cert = Certificate::from_margins(constants, margins);
    cert.note = note;
    Ok(cert)
}

/// Cumulative rate integral helper used by a few closed-form limits:
/// `out[k] = int_{t_k}^T A ds`.
pub fn rate_integral<R: Real>(spec: &ModelSpec<R>, grid: &TimeGrid<R>) -> Vec<R> {
    let rate: Vec<R> = grid.times().iter().map(|&t| spec.rate.eval(t)).collect();
    cumulative_to_end(grid, &rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_spec;
    use approx::assert_relative_eq;

    fn bench(mu1: f64, xi: f64) -> ModelSpec<f64> {
        benchmark_spec(AmbiguityMode::StateDep, mu1, xi)
    }

    fn coeffs_of(spec: &ModelSpec<f64>, t: f64) -> Coeffs<f64> {
        spec.coeffs_at(t).unwrap()
    }

    #[test]
    fn alpha_at_benchmark_terminal() {
        // M = 1, Delta = E = -2, xi = 10 gives mu1 B / (1 + mu1^2/xi).
        let spec = bench(2.0, 10.0);
        let cf = coeffs_of(&spec, 1.0);
        let a = alpha_state(1.0, &cf, 1.0, -2.0, -2.0, 10.0).unwrap();
        assert_relative_eq!(a[0], 0.75 / 1.4, max_relative = 1e-15);
    }

    #[test]
    fn alpha_zero_numerator() {
        let spec = bench(2.0, 10.0);
        let cf = coeffs_of(&spec, 0.5);
        let a = alpha_state(0.5, &cf, 1.0, 0.0, -1.0, 10.0).unwrap();
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn alpha_hand_evaluated_node() {
        // M = 1, Delta = -1, E = -1, xi = 1, B = 0.5, C = 0.1, D = 1, R = 0.2:
        // alpha = -(2*0.1 - 0.5) / (0.2 + 2) = 0.3 / 2.2.
        let cf = Coeffs {
            rate: 0.0,
            sharpe: vec![0.5],
            state_vol: vec![0.1],
            ctrl_vol: vec![1.0],
            state_cost: 0.0,
            ctrl_cost: 0.2,
        };
        let a = alpha_state(0.0, &cf, 1.0, -1.0, -1.0, 1.0).unwrap();
        assert_relative_eq!(a[0], 0.3 / 2.2, max_relative = 1e-15);
    }

    #[test]
    fn distortion_formula() {
        let spec = bench(2.0, 10.0);
        let cf = coeffs_of(&spec, 1.0);
        let alpha = vec![0.75 / 1.4];
        let h = h_state(&alpha, -2.0, &cf, 10.0);
        assert_relative_eq!(h[0], -0.2 * 0.75 / 1.4, max_relative = 1e-15);
        assert_eq!(h_state(&alpha, 0.0, &cf, 10.0)[0], 0.0);
        assert_eq!(h_state(&[0.0], -2.0, &cf, 10.0)[0], 0.0);
    }

    #[test]
    fn rhs_terminal_gamma_line() {
        // At the benchmark terminal node C = 0 kills the distortion feedback
        // in the Gamma line, leaving -A * mu1 = -0.04.
        let spec = bench(2.0, 10.0);
        let node = CoeffNode::from_slice(&terminal_node(&spec));
        let d = rhs_state(1.0, &node, &spec).unwrap();
        assert_relative_eq!(d[5], -0.04, max_relative = 1e-14);
    }

    #[test]
    fn rhs_degenerate_risk_neutral_terminal() {
        // mu1 = 0, G = nu: Delta = E = 0 so alpha = h = 0 and the system is
        // the non-robust linear one.
        let spec = bench(0.0, 10.0);
        let node = CoeffNode::from_slice(&terminal_node(&spec));
        let d = rhs_state(1.0, &node, &spec).unwrap();
        assert_eq!(d[5], 0.0); // Gamma' = -A*0
        assert_eq!(d[2], 0.0); // F' = 0
        assert_relative_eq!(d[4], -0.04, max_relative = 1e-15); // N' = -2A nu
        assert_relative_eq!(d[3], -0.04, max_relative = 1e-15); // M' = -2A G - Q
    }

    #[test]
    fn rhs_pure_decay_when_policy_zero() {
        // Q = R = 0, C = 0, Delta = E = 0 at a node with L = l: L' = -2A l.
        let spec = bench(2.0, 10.0);
        let node = CoeffNode {
            l: 0.7,
            h: 1.4,
            f: 0.0,
            m: 1.0,
            n: 1.0,
            gamma: 0.0,
        };
        let d = rhs_state(0.5, &node, &spec).unwrap();
        assert_relative_eq!(d[0], -0.04 * 0.7, max_relative = 1e-15);
    }

    #[test]
    fn solve_benchmark_terminal_and_initial_values() {
        let spec = bench(2.0, 10.0);
        let grid = TimeGrid::new(1.0, 2000);
        let sol = solve_state(&spec, &grid).unwrap();

        // Terminal values reproduced exactly.
        let term = sol.coeffs.terminal();
        assert_eq!(term.l, 0.5);
        assert_eq!(term.m, 1.0);
        assert_eq!(term.gamma, 2.0);
        let pt = sol.policy.terminal();
        assert_relative_eq!(pt.alpha[0], 0.5357142857142857, max_relative = 1e-13);
        assert_relative_eq!(pt.distortion[0], -0.10714285714285714, max_relative = 1e-13);

        // Initial values frozen from an independent adaptive integration.
        let n0 = &sol.coeffs.nodes[0];
        assert_relative_eq!(n0.l, 0.8378518507807673, max_relative = 1e-10);
        assert_relative_eq!(n0.h, 1.3825846283755148, max_relative = 1e-10);
        assert_relative_eq!(n0.f, 2.3516671774513713, max_relative = 1e-10);
        assert_relative_eq!(n0.m, 1.0681156911854532, max_relative = 1e-10);
        assert_relative_eq!(n0.n, 1.1995870028664137, max_relative = 1e-10);
        assert_relative_eq!(n0.gamma, 2.0404026800535116, max_relative = 1e-10);
        let p0 = &sol.policy.nodes[0];
        assert_relative_eq!(p0.alpha[0], 0.5375193418450309, max_relative = 1e-10);
        assert_relative_eq!(p0.distortion[0], -0.11065094221610478, max_relative = 1e-10);
    }

    #[test]
    fn risk_neutral_mu1_zero_gives_zero_policy() {
        let spec = bench(0.0, 10.0);
        let grid = TimeGrid::new(1.0, 500);
        let sol = solve_state(&spec, &grid).unwrap();
        for (k, node) in sol.coeffs.nodes.iter().enumerate() {
            assert_eq!(node.f, 0.0);
            assert_eq!(node.gamma, 0.0);
            assert_eq!(node.m, node.n);
            assert_eq!(2.0 * node.l, node.h);
            assert_eq!(sol.policy.nodes[k].alpha[0], 0.0);
            assert_eq!(sol.policy.nodes[k].distortion[0], 0.0);
        }
    }

    #[test]
    fn extreme_risk_tolerance_kills_investment() {
        let spec = bench(1e6, 10.0);
        let grid = TimeGrid::new(1.0, 2000);
        let sol = solve_state(&spec, &grid).unwrap();
        assert!(sol.policy.max_abs_alpha() < 1e-3);
        let worst_h = sol
            .policy
            .nodes
            .iter()
            .map(|p| (p.distortion[0] + 0.375).abs())
            .fold(0.0f64, f64::max);
        assert!(worst_h < 1e-3);
    }

    #[test]
    fn distortion_identity_is_exact() {
        let spec = bench(2.0, 10.0);
        let grid = TimeGrid::new(1.0, 400);
        let sol = solve_state(&spec, &grid).unwrap();
        for (k, node) in sol.coeffs.nodes.iter().enumerate() {
            let cf = spec.coeffs_at(grid.node(k)).unwrap();
            let h = h_state(&sol.policy.nodes[k].alpha, node.e(), &cf, spec.ambiguity);
            assert_eq!(h, sol.policy.nodes[k].distortion);
        }
    }

    #[test]
    fn policy_is_x0_independent() {
        let grid = TimeGrid::new(1.0, 300);
        let a = solve_state(&bench(2.0, 10.0), &grid).unwrap();
        let mut spec = bench(2.0, 10.0);
        spec.x0 = 17.0;
        let b = solve_state(&spec, &grid).unwrap();
        for k in 0..grid.len() {
            assert_eq!(a.policy.nodes[k].alpha, b.policy.nodes[k].alpha);
        }
    }

    #[test]
    fn p_second_order_examples() {
        let spec = bench(2.0, 10.0);
        let grid = TimeGrid::new(1.0, 2000);
        // h = 0: P(t;t) = G exp(2A (T - t)), so P(T;T) = 1, P(0;0) = e^{0.04}.
        let zeros = vec![vec![0.0]; grid.len()];
        let p = p_second_order(&spec, &grid, &zeros);
        assert_eq!(p[grid.steps()], 1.0);
        assert_relative_eq!(p[0], (0.04f64).exp(), max_relative = 1e-12);

        // nu = G with nonzero C, Q = 0, h = 0: terminal weight collapses.
        let mut with_c = bench(2.0, 10.0);
        with_c.state_vol = vec![crate::model::Schedule::Constant(0.2)];
        let p = p_second_order(&with_c, &grid, &zeros);
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn certificate_passes_at_small_horizon_and_fails_at_one() {
        let spec = bench(2.0, 10.0).with_horizon(0.035);
        let grid = TimeGrid::new(0.035, 200);
        let cert = certify_state(&spec, &grid, None).unwrap();
        assert!(cert.verdict, "margins: {:?}", cert.margins);

        let spec = bench(2.0, 10.0);
        let grid = TimeGrid::new(1.0, 200);
        let cert = certify_state(&spec, &grid, None).unwrap();
        assert!(!cert.verdict);
    }

    #[test]
    fn certificate_rejects_bad_constants() {
        let spec = bench(2.0, 10.0);
        let grid = TimeGrid::new(1.0, 100);
        let cs = StateCertConstants {
            m_lower: 0.0,
            m_upper: 1.5,
            delta_lower: -2.5,
            e_lower: -2.5,
        };
        let err = certify_state(&spec, &grid, Some(cs)).unwrap_err();
        assert!(err.to_string().contains("m_lower"));
    }
}
