//! Control-dependent ambiguity aversion (CDAA): solver and certificate.
//!
//! The adversary pays `xi2 * l * u_j^2` per driver, so distortion is only
//! priced while the investor is actually exposed: `h*_j = E D / (xi2 l
//! alpha*_j)`, which requires `alpha*_j != 0` throughout. Eliminating `h*`
//! from the first-order condition turns the investment rule into a per-driver
//! quadratic
//!
//! ```text
//! kappa alpha^2 + beta_j alpha + gamma = 0,
//! kappa = D^2 M + R,  beta_j = B_j Delta,  gamma = D^2 (Delta E - E^2)/(xi2 l)
//! ```
//!
//! whose redundant zero root at the terminal node is discarded; away from the
//! terminal the branch continuous with `-beta/kappa` is followed.

use crate::cert::{Certificate, Margin, NamedValue};
use crate::error::{ConstantsError, SolveError};
use crate::model::{AmbiguityMode, ModelSpec, TimeGrid};
use crate::odeint::{Rk4, StepFailure};
use crate::quad::linear_terminal_ode;
use crate::real::Real;
use crate::solution::{CoeffNode, CoeffPath, Policy, PolicyNode, Solution, SolveInfo};
use crate::statedep::{p_second_order, rate_integral, terminal_node};

/// Round-off allowance when the discriminant sits at equality.
const DISC_CLAMP: f64 = 1e-12;

/// Linear coefficients below this (relative to `kappa`) trigger the
/// continuity fallback and a diagnostic flag on the solve.
const BETA_FLAG: f64 = 1e-10;

/// Quadratic coefficients of the investment equation at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCoeffs<R: Real> {
    pub kappa: R,
    pub beta: Vec<R>,
    pub gamma: R,
}

/// Assemble `kappa`, `beta_j`, `gamma` from node values.
pub fn quad_coeffs<R: Real>(
    m: R,
    delta: R,
    e: R,
    d_vol: R,
    r_cost: R,
    sharpe: &[R],
    xi2: R,
    ell: usize,
) -> QuadCoeffs<R> {
    let d2 = d_vol * d_vol;
    QuadCoeffs {
        kappa: d2 * m + r_cost,
        beta: sharpe.iter().map(|&b| b * delta).collect(),
        gamma: d2 * (delta * e - e * e) / (xi2 * R::of_count(ell)),
    }
}

/// Select the equilibrium root per component.
///
/// `prev` is the investment at the previously processed (later-in-time) node
/// and only breaks ties when `beta_j` vanishes with `gamma < 0`; `terminal`
/// marks the first processed node, where a vanishing `beta_j` is fatal
/// because the nonzero terminal root `-beta/kappa` must exist.
///
/// Returns the roots plus the component indices where the continuity
/// fallback fired (callers surface those as diagnostics).
pub fn alpha_ctrl<R: Real>(
    t: R,
    q: &QuadCoeffs<R>,
    prev: &[R],
    terminal: bool,
) -> Result<(Vec<R>, Vec<usize>), SolveError> {
    if !(q.kappa > R::zero()) {
        return Err(SolveError::IllConditioned {
            t: t.as_f64(),
            cond: f64::INFINITY,
        });
    }
    let two = R::of(2.0);
    let clamp = R::of(DISC_CLAMP);
    let mut alpha = vec![R::zero(); q.beta.len()];
    let mut flagged = Vec::new();
    for (j, &beta) in q.beta.iter().enumerate() {
        if q.gamma == R::zero() {
            // Exact factorization: roots 0 and -beta/kappa. The zero root is
            // the redundant one.
            if beta == R::zero() {
                return Err(if terminal {
                    SolveError::ZeroTerminalRoot { component: j }
                } else {
                    SolveError::DegenerateInvestment {
                        t: t.as_f64(),
                        component: j,
                    }
                });
            }
            alpha[j] = -beta / q.kappa;
            continue;
        }
        let mut disc = beta * beta - R::of(4.0) * q.kappa * q.gamma;
        if disc < R::zero() {
            if disc < -clamp {
                return Err(SolveError::NoRealRoot {
                    t: t.as_f64(),
                    component: j,
                    discriminant: disc.as_f64(),
                });
            }
            disc = R::zero();
        }
        if beta.abs() <= clamp.max(q.kappa.abs() * R::of(BETA_FLAG)) {
            // beta ~ 0: roots are +/- sqrt(-gamma/kappa); stay on the branch
            // carrying the sign of the later-in-time value.
            if q.gamma > R::zero() {
                return Err(SolveError::NoRealRoot {
                    t: t.as_f64(),
                    component: j,
                    discriminant: (-R::of(4.0) * q.kappa * q.gamma).as_f64(),
                });
            }
            let root = (-q.gamma / q.kappa).sqrt();
            alpha[j] = if prev[j] < R::zero() { -root } else { root };
            flagged.push(j);
        } else {
            let sgn = if beta > R::zero() { R::one() } else { -R::one() };
            alpha[j] = (-beta - sgn * disc.sqrt()) / (two * q.kappa);
        }
    }
    Ok((alpha, flagged))
}

/// Distortion `h*_j = E D / (xi2 l alpha*_j)`.
pub fn h_ctrl<R: Real>(
    t: R,
    alpha: &[R],
    e: R,
    d_vol: R,
    xi2: R,
    ell: usize,
) -> Result<Vec<R>, SolveError> {
    let scale = xi2 * R::of_count(ell);
    alpha
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            if a == R::zero() {
                Err(SolveError::DegenerateInvestment {
                    t: t.as_f64(),
                    component: j,
                })
            } else {
                Ok(e * d_vol / (scale * a))
            }
        })
        .collect()
}

/// Time derivatives of the CDAA coefficient system. `Gamma` decouples and is
/// also available in closed form (`mu1 exp(int_t^T A)`), used as a
/// cross-check in the tests.
pub fn rhs_ctrl<R: Real>(
    t: R,
    node: &CoeffNode<R>,
    spec: &ModelSpec<R>,
    prev_alpha: &[R],
    terminal: bool,
) -> Result<[R; 6], SolveError> {
    let cf = spec.coeffs_at(t)?;
    let xi2 = spec.ambiguity;
    let ell = spec.ell();
    let d_vol = cf.ctrl_vol[0];
    let delta = node.delta();
    let e = node.e();
    let q = quad_coeffs(node.m, delta, e, d_vol, cf.ctrl_cost, &cf.sharpe, xi2, ell);
    let (alpha, _) = alpha_ctrl(t, &q, prev_alpha, terminal)?;

    let two = R::of(2.0);
    let half = R::of(0.5);
    let d2 = d_vol * d_vol;
    let b_alpha: R = cf
        .sharpe
        .iter()
        .zip(alpha.iter())
        .map(|(&b, &a)| b * a)
        .sum();
    let alpha2: R = alpha.iter().map(|&a| a * a).sum();
    let a = cf.rate;
    let shift = d2 * e / xi2;

    let dl = -(two * a + two * b_alpha + two * shift + d2 * alpha2) * node.l
        - half * cf.state_cost
        - half * cf.ctrl_cost * alpha2
        + e * e * d2 / (two * xi2);
    let dh = -(two * a + two * b_alpha + two * shift) * node.h;
    let df = -(a + b_alpha + shift) * node.f;
    let dm = -(two * a + b_alpha + shift) * node.m - cf.state_cost;
    let dn = -(two * a + b_alpha + shift) * node.n;
    let dgamma = -a * node.gamma;
    Ok([dl, dh, df, dm, dn, dgamma])
}

/// Solve the control-dependent equilibrium on `grid`.
///
/// Refuses `mu1 = 0`: the degenerate pair `h* = 0, u* = 0` has no penalty
/// channel and is reported through [`SolveError::RiskNeutralCtrl`] so sweep
/// layers can emit it as an analytic row instead.
pub fn solve_ctrl<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
) -> Result<Solution<R>, SolveError> {
    assert_eq!(
        spec.mode,
        AmbiguityMode::CtrlDep,
        "solve_ctrl expects a control-dependent spec"
    );
    if spec.risk_aversion == R::zero() {
        return Err(SolveError::RiskNeutralCtrl);
    }

    let xi2 = spec.ambiguity;
    let ell = spec.ell();
    let steps = grid.steps();
    let mut path: Vec<[R; 6]> = vec![[R::zero(); 6]; grid.len()];
    path[steps] = terminal_node(spec);

    // Policy at the terminal node seeds the branch-continuity reference.
    let policy_at = |t: R, node: &CoeffNode<R>, prev: &[R], terminal: bool| {
        let cf = spec.coeffs_at(t)?;
        let q = quad_coeffs(
            node.m,
            node.delta(),
            node.e(),
            cf.ctrl_vol[0],
            cf.ctrl_cost,
            &cf.sharpe,
            xi2,
            ell,
        );
        let (alpha, flagged) = alpha_ctrl(t, &q, prev, terminal)?;
        let h = h_ctrl(t, &alpha, node.e(), cf.ctrl_vol[0], xi2, ell)?;
        Ok::<_, SolveError>((alpha, h, flagged))
    };

    let t_end = grid.node(steps);
    let term_node = CoeffNode::from_slice(&path[steps]);
    let seed = vec![R::one(); spec.dim];
    let (mut prev_alpha, mut h, flagged) = policy_at(t_end, &term_node, &seed, true)?;

    let mut alphas = vec![Vec::new(); grid.len()];
    let mut distortions = vec![Vec::new(); grid.len()];
    let mut branch_flags = Vec::new();
    alphas[steps] = prev_alpha.clone();
    distortions[steps] = h.clone();
    if !flagged.is_empty() {
        branch_flags.push(steps);
    }

    // Drive the steps directly so each committed node refreshes the
    // branch-continuity reference before the next step's stages use it.
    let mut kernel = Rk4::new(6);
    for k in (0..steps).rev() {
        let t0 = grid.node(k + 1);
        let t1 = grid.node(k);
        let y0 = path[k + 1];
        let mut y1 = [R::zero(); 6];
        let mut rhs = |t: R, y: &[R], out: &mut [R]| {
            let node = CoeffNode::from_slice(y);
            let d = rhs_ctrl(t, &node, spec, &prev_alpha, false)?;
            out.copy_from_slice(&d);
            Ok(())
        };
        match kernel.step(&mut rhs, t0, t1, &y0, &mut y1) {
            Ok(()) => {}
            Err(StepFailure::NonFinite { stage }) => {
                return Err(SolveError::NonFiniteRhs {
                    node: k,
                    stage,
                    t: t1.as_f64(),
                })
            }
            Err(StepFailure::Rhs(e)) => return Err(e),
        }
        path[k] = y1;
        let node = CoeffNode::from_slice(&y1);
        let (alpha, hh, fl) = policy_at(t1, &node, &prev_alpha, false)?;
        prev_alpha = alpha.clone();
        h = hh;
        alphas[k] = alpha;
        distortions[k] = h.clone();
        if !fl.is_empty() {
            branch_flags.push(k);
        }
    }
    branch_flags.reverse();

    let nodes: Vec<CoeffNode<R>> = path.iter().map(|y| CoeffNode::from_slice(y)).collect();
    let p = p_second_order(spec, grid, &distortions);
    let scale = xi2 * R::of_count(ell);
    let mut policy_nodes = Vec::with_capacity(nodes.len());
    for k in 0..nodes.len() {
        let cf = spec.coeffs_at(grid.node(k))?;
        let d2 = cf.ctrl_vol[0] * cf.ctrl_vol[0];
        let sigma_min = distortions[k]
            .iter()
            .map(|&hj| cf.ctrl_cost - scale * hj * hj + d2 * p[k])
            .fold(R::infinity(), R::min);
        policy_nodes.push(PolicyNode {
            alpha: alphas[k].clone(),
            distortion: distortions[k].clone(),
            p_tt: p[k],
            sigma_min,
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
        info: SolveInfo {
            branch_flag_nodes: branch_flags,
        },
    })
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

/// Truncation constants for the control-dependent certificate.
#[derive(Debug, Clone, Copy)]
pub struct CtrlCertConstants<R: Real> {
    pub m_lower: R,
    pub m_upper: R,
    pub delta_upper: R,
    pub e_upper: R,
    /// Uniform lower bound on `|alpha*_j|`; `None` defaults to half the
    /// minimum over the first solve.
    pub phi: Option<R>,
}

impl<R: Real> CtrlCertConstants<R> {
    /// Example construction: requires `l xi2 B^2 > 1` (checked at the weakest
    /// grid node); `eps0 = min(1/2, 1 - 1/(l xi2 B^2), mu1 |B|/2,
    /// l xi2 B^2 - 1)`, `delta_upper = mu1 exp(int_0^T A)`,
    /// `e_upper = mu1 + eps0 G`.
    pub fn defaults(spec: &ModelSpec<R>, grid: &TimeGrid<R>) -> Result<Self, ConstantsError> {
        let sampled = spec.sample(grid).expect("grid within horizon");
        let mut b_min = R::infinity();
        for j in 0..spec.dim {
            for k in 0..grid.len() {
                b_min = b_min.min(sampled.sharpe[j][k].abs());
            }
        }
        let lxb2 = spec.xi_ell() * b_min * b_min;
        if !(lxb2 > R::one()) {
            return Err(ConstantsError::new(format!(
                "default constants require l xi2 B^2 > 1 at every node (min over grid is {lxb2})"
            )));
        }
        let g = spec.terminal_weight;
        let mu1 = spec.risk_aversion;
        let eps0 = R::of(0.5)
            .min(R::one() - R::one() / lxb2)
            .min(mu1 * b_min / R::of(2.0))
            .min(lxb2 - R::one());
        let int_a = rate_integral(spec, grid)[0];
        Ok(Self {
            m_lower: (R::one() - eps0) * g,
            m_upper: (R::one() + eps0) * g,
            delta_upper: mu1 * int_a.exp(),
            e_upper: mu1 + eps0 * g,
            phi: None,
        })
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
        if !(-self.delta_upper <= gap && gap <= self.delta_upper) {
            return Err(ConstantsError::new(format!(
                "-delta_upper <= G - nu - mu1 <= delta_upper violated (delta_upper = {}, gap = {})",
                self.delta_upper, gap
            )));
        }
        if !(-self.e_upper <= gap && gap <= self.e_upper) {
            return Err(ConstantsError::new(format!(
                "-e_upper <= G - nu - mu1 <= e_upper violated (e_upper = {}, gap = {})",
                self.e_upper, gap
            )));
        }
        if let Some(phi) = self.phi {
            if !(phi > R::zero()) {
                return Err(ConstantsError::new(format!(
                    "phi > 0 violated (phi = {phi})"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluate the control-dependent well-posedness certificate.
pub fn certify_ctrl<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    constants: Option<CtrlCertConstants<R>>,
) -> Result<Certificate, ConstantsError> {
    let cs = match constants {
        Some(c) => c,
        None => CtrlCertConstants::defaults(spec, grid)?,
    };
    cs.check(spec)?;
    let sampled = spec.sample(grid).expect("grid within horizon");
    let xi2 = spec.ambiguity;
    let xil = spec.xi_ell();
    let n = grid.len();
    let two = R::of(2.0);
    let half = R::of(0.5);

    // Discriminant condition and solution-independent bounds, nodewise.
    let mut disc_slack = vec![R::infinity(); n];
    let mut u_l1 = vec![R::zero(); n];
    let mut u_l0 = vec![R::zero(); n];
    let mut v_l1 = vec![R::zero(); n];
    let mut v_l0 = vec![R::zero(); n];
    let mut u_h1 = vec![R::zero(); n];
    let mut v_h1 = vec![R::zero(); n];
    let mut u_f1 = vec![R::zero(); n];
    let mut v_f1 = vec![R::zero(); n];
    let mut u_m1 = vec![R::zero(); n];
    let mut v_m1 = vec![R::zero(); n];
    let mut q_force = vec![R::zero(); n];

    for k in 0..n {
        let a = sampled.rate[k];
        let q = sampled.state_cost[k];
        let r = sampled.ctrl_cost[k];
        let dv = sampled.ctrl_vol[0][k];
        let d2 = dv * dv;
        let kappa_lo = d2 * cs.m_lower + r;
        let mut b_bar = R::zero(); // sum_j |B_j| alpha_bar_j
        let mut a2_bar = R::zero(); // sum_j alpha_bar_j^2
        for j in 0..spec.dim {
            let b = sampled.sharpe[j][k];
            disc_slack[k] = disc_slack[k].min(xil * b * b - d2 * (d2 * cs.m_upper + r));
            let alpha_bar = b.abs() * cs.delta_upper / kappa_lo
                + dv.abs() * (cs.e_upper * cs.e_upper + cs.delta_upper * cs.e_upper).sqrt()
                    / (xil * kappa_lo).sqrt();
            b_bar += b.abs() * alpha_bar;
            a2_bar += alpha_bar * alpha_bar;
        }
        let shift = d2 * cs.e_upper / xi2;
        u_l1[k] = two * a - two * b_bar - two * shift;
        u_l0[k] = half * q - cs.e_upper * cs.e_upper * d2 / (two * xi2);
        v_l1[k] = two * a + two * b_bar + two * shift + d2 * a2_bar;
        v_l0[k] = half * q + half * r * a2_bar;
        u_h1[k] = two * a - two * b_bar - two * shift;
        v_h1[k] = two * a + two * b_bar + two * shift;
        u_f1[k] = a - b_bar - shift;
        v_f1[k] = a + b_bar + shift;
        u_m1[k] = two * a - b_bar - shift;
        v_m1[k] = two * a + b_bar + shift;
        q_force[k] = q;
    }

    let zero = vec![R::zero(); n];
    let g = spec.terminal_weight;
    let nu = spec.variance_weight;
    let mu1 = spec.risk_aversion;
    let l_lo = linear_terminal_ode(grid, &u_l1, &u_l0, half * g);
    let l_hi = linear_terminal_ode(grid, &v_l1, &v_l0, half * g);
    let m_lo = linear_terminal_ode(grid, &u_m1, &q_force, g);
    let m_hi = linear_terminal_ode(grid, &v_m1, &q_force, g);
    let i_lo = linear_terminal_ode(grid, &u_m1, &q_force, g - nu);
    let i_hi = linear_terminal_ode(grid, &v_m1, &q_force, g - nu);
    let h_lo = linear_terminal_ode(grid, &u_h1, &zero, nu);
    let h_hi = linear_terminal_ode(grid, &v_h1, &zero, nu);
    let f_lo = linear_terminal_ode(grid, &u_f1, &zero, mu1);
    let f_hi = linear_terminal_ode(grid, &v_f1, &zero, mu1);
    // Gamma in closed form, same quadrature as the delta_upper default so the
    // t = 0 comparison is exact.
    let gamma: Vec<R> = rate_integral(spec, grid)
        .iter()
        .map(|&ia| mu1 * ia.exp())
        .collect();

    let per_node = |f: &dyn Fn(usize) -> R| (0..n).map(f).collect::<Vec<R>>();
    let mut margins = vec![
        Margin::from_slacks("discriminant_nonnegative", grid, &disc_slack),
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
            "delta_below_upper_bound",
            grid,
            &per_node(&|k| cs.delta_upper - (i_hi[k] - gamma[k])),
        ),
        Margin::from_slacks(
            "delta_above_lower_bound",
            grid,
            &per_node(&|k| (i_lo[k] - gamma[k]) + cs.delta_upper),
        ),
        Margin::from_slacks(
            "e_below_upper_bound",
            grid,
            &per_node(&|k| cs.e_upper - (two * l_hi[k] - h_lo[k] - f_lo[k])),
        ),
        Margin::from_slacks(
            "e_above_lower_bound",
            grid,
            &per_node(&|k| (two * l_lo[k] - h_hi[k] - f_hi[k]) + cs.e_upper),
        ),
    ];

    // Admissibility conditions on the solved policy.
    let mut note = None;
    match solve_ctrl(spec, grid) {
        Ok(sol) => {
            let sigma: Vec<R> = sol.policy.nodes.iter().map(|p| p.sigma_min).collect();
            margins.push(Margin::from_slacks("second_order_condition", grid, &sigma));
            let min_alpha = sol.policy.min_abs_alpha();
            let phi = cs.phi.unwrap_or(half * min_alpha);
            margins.push(Margin::scalar(
                "investment_bounded_away_from_zero",
                (min_alpha - phi).as_f64(),
                f64::NAN,
            ));
        }
        Err(e) => {
            margins.push(Margin::scalar("second_order_condition", f64::NAN, f64::NAN));
            margins.push(Margin::scalar(
                "investment_bounded_away_from_zero",
                f64::NAN,
                f64::NAN,
            ));
            note = Some(format!(
                "admissibility conditions unevaluated: solve failed: {e}"
            ));
        }
    }

    let constants = vec![
        NamedValue::new("m_lower", cs.m_lower.as_f64()),
        NamedValue::new("m_upper", cs.m_upper.as_f64()),
        NamedValue::new("delta_upper", cs.delta_upper.as_f64()),
        NamedValue::new("e_upper", cs.e_upper.as_f64()),
        NamedValue::new(
            "phi",
            cs.phi.map(Real::as_f64).unwrap_or(f64::NAN),
        ),
    ];
    let mut cert = Certificate::from_margins(constants, margins);
    cert.note = note;
    Ok(cert)
}
