//! Acceptance suite: every release criterion as one test, each printing a
//! pass line with the measured quantity (visible with `--nocapture`).
//!
//! The benchmark market throughout: `A = 0.02`, `B = 0.375`, `x0 = 1`,
//! `T = 1`, `G = nu = 1`, `D = 1`, `R = Q = C = 0`.

use std::time::Instant;

use rlq_core::baseline::{closed_loop_nonrobust, open_loop_nonrobust};
use rlq_core::ctrldep::{certify_ctrl, solve_ctrl, CtrlCertConstants};
use rlq_core::model::{benchmark_spec, AmbiguityMode, ModelSpec, TimeGrid};
use rlq_core::mv::{relation_sweep, sweep_risk, terminal_stats, RelationForm, RowStatus};
use rlq_core::statedep::{certify_state, solve_state};
use rlq_core::verify::{mc_cross_check, residuals, spike_ladder, spike_quotient, SpikeKind};
use rlq_core::Solution;

const MU1_GRID: [f64; 3] = [0.5, 2.0, 5.0];
const XI_GRID: [f64; 3] = [1.0, 10.0, 100.0];

fn grid(steps: usize) -> TimeGrid<f64> {
    TimeGrid::new(1.0, steps)
}

fn state(mu1: f64, xi: f64) -> ModelSpec<f64> {
    benchmark_spec(AmbiguityMode::StateDep, mu1, xi)
}

fn ctrl(mu1: f64, xi: f64) -> ModelSpec<f64> {
    benchmark_spec(AmbiguityMode::CtrlDep, mu1, xi)
}

fn solve(spec: &ModelSpec<f64>, grid: &TimeGrid<f64>) -> Solution {
    match spec.mode {
        AmbiguityMode::StateDep => solve_state(spec, grid).expect("state solve"),
        AmbiguityMode::CtrlDep => solve_ctrl(spec, grid).expect("ctrl solve"),
    }
}

#[test]
fn criterion_01_terminal_value_identity() {
    let g = grid(2000);
    let mut worst_state = 0.0f64;
    let mut worst_ctrl = 0.0f64;
    let mut slowest = 0.0f64;
    for mu1 in MU1_GRID {
        for xi in XI_GRID {
            let start = Instant::now();
            let s = solve(&state(mu1, xi), &g);
            slowest = slowest.max(start.elapsed().as_secs_f64());
            let target = mu1 * 0.375 / (1.0 + mu1 * mu1 / xi);
            worst_state = worst_state.max((s.policy.terminal().alpha[0] - target).abs());

            // The control-dependent quadratic factorizes at the terminal
            // node: its nonzero root is mu1 B, shared with the non-robust
            // equilibria (the state-dependent identity above does not apply).
            let start = Instant::now();
            let c = solve(&ctrl(mu1, xi), &g);
            slowest = slowest.max(start.elapsed().as_secs_f64());
            worst_ctrl = worst_ctrl.max((c.policy.terminal().alpha[0] - mu1 * 0.375).abs());
        }
    }
    assert!(worst_state < 1e-10, "state-dependent defect {worst_state}");
    assert!(worst_ctrl < 1e-10, "control-dependent defect {worst_ctrl}");
    assert!(slowest < 1.0, "slowest solve took {slowest:.3}s");
    println!(
        "acceptance criterion 01 (terminal-value identity): PASS \
         (max defects {worst_state:.2e} / {worst_ctrl:.2e}, slowest solve {slowest:.3}s)"
    );
}

#[test]
fn criterion_02_risk_aversion_limits() {
    let g = grid(2000);
    let s = solve(&state(0.0, 10.0), &g);
    let max_alpha = s.policy.max_abs_alpha();
    let max_h = s
        .policy
        .nodes
        .iter()
        .map(|n| n.distortion[0].abs())
        .fold(0.0f64, f64::max);
    assert!(max_alpha < 1e-10 && max_h < 1e-10);

    let s = solve(&state(1e6, 10.0), &g);
    let big_alpha = s.policy.max_abs_alpha();
    let big_h = s
        .policy
        .nodes
        .iter()
        .map(|n| (n.distortion[0] + 0.375).abs())
        .fold(0.0f64, f64::max);
    assert!(big_alpha < 1e-3, "max |alpha| = {big_alpha}");
    assert!(big_h < 1e-3, "max |h + B| = {big_h}");
    println!(
        "acceptance criterion 02 (risk-aversion limits): PASS \
         (mu1=0 exact zeros; mu1=1e6 -> {big_alpha:.2e}, {big_h:.2e})"
    );
}

#[test]
fn criterion_03_cdaa_terminal_values() {
    let standing = 1.0 * 10.0 * 0.375 * 0.375;
    assert_eq!(standing, 1.40625);
    assert!(standing > 1.0, "l xi2 B^2 = {standing} must exceed 1");

    let g = grid(2000);
    let s = solve(&ctrl(2.0, 10.0), &g);
    let term = s.policy.terminal();
    assert!((term.alpha[0] - 0.75).abs() < 1e-9);
    assert!((term.distortion[0] - (-1.0 / 3.75)).abs() < 1e-9);
    println!(
        "acceptance criterion 03 (CDAA terminal values): PASS \
         (alpha_T = {}, h_T = {}, l xi2 B^2 = {standing})",
        term.alpha[0], term.distortion[0]
    );
}

#[test]
fn criterion_04_large_xi_reduction() {
    let g = grid(2000);
    let open = open_loop_nonrobust(&state(2.0, 1e8), &g);
    let mut worst = 0.0f64;
    for spec in [state(2.0, 1e8), ctrl(2.0, 1e8)] {
        let s = solve(&spec, &g);
        for k in 0..g.len() {
            worst = worst.max((s.policy.nodes[k].alpha[0] - open.alpha[k][0]).abs());
        }
    }
    assert!(worst < 1e-4, "max node error {worst}");
    println!("acceptance criterion 04 (xi -> infinity reduction): PASS (max error {worst:.2e})");
}

#[test]
fn criterion_05_frontier_loop_closure() {
    let g = grid(2000);
    let rows = sweep_risk(&state(2.0, 10.0), &g, &[0.0, 1e6], 0);
    let target = (0.02f64).exp();
    for row in &rows {
        assert_eq!(row.status, RowStatus::Ok);
        assert!(
            (row.mean - target).abs() < 1e-3 && row.std_dev < 1e-3,
            "row mu1 = {}: ({}, {})",
            row.swept,
            row.mean,
            row.std_dev
        );
    }
    println!(
        "acceptance criterion 05 (frontier loop closure): PASS \
         (endpoints within 1e-3 of (e^0.02, 0))"
    );
}

#[test]
fn criterion_06_relation_regimes() {
    let g = grid(2000);
    let linear = relation_sweep(
        &state(2.0, 10.0),
        &g,
        RelationForm::Linear { a0: 5.0, a1: 2.0 },
        &[1e5, 1e6],
        0,
    )
    .unwrap();
    let rel_change = (linear[1].mean - linear[0].mean).abs() / linear[0].mean;
    assert!(rel_change < 0.01, "linear relation mean change {rel_change}");

    let quad = relation_sweep(
        &state(2.0, 10.0),
        &g,
        RelationForm::Quadratic { a1: 2.0 },
        &[10.0, 100.0, 1000.0],
        0,
    )
    .unwrap();
    assert!(
        quad[0].mean < quad[1].mean && quad[1].mean < quad[2].mean,
        "means not strictly increasing: {:?}",
        quad.iter().map(|r| r.mean).collect::<Vec<_>>()
    );
    println!(
        "acceptance criterion 06 (aversion-relation regimes): PASS \
         (linear change {rel_change:.2e}; quadratic means {:.3e} < {:.3e} < {:.3e})",
        quad[0].mean, quad[1].mean, quad[2].mean
    );
}

#[test]
fn criterion_07_first_order_residuals() {
    let g = grid(2000);
    let mut configs: Vec<ModelSpec<f64>> = Vec::new();
    for mu1 in MU1_GRID {
        for xi in XI_GRID {
            configs.push(state(mu1, xi));
            // The control-dependent admissibility conditions presuppose the
            // standing requirement l xi2 B^2 > 1, which excludes xi = 1 on
            // this market (l xi2 B^2 = 0.140625).
            if xi * 0.375 * 0.375 > 1.0 {
                configs.push(ctrl(mu1, xi));
            }
        }
    }
    let mut worst_zeta = 0.0f64;
    let mut worst_x = 0.0f64;
    let mut floor = f64::INFINITY;
    for spec in &configs {
        let s = solve(spec, &g);
        let rep = residuals(&s.coeffs, &s.policy, spec);
        worst_zeta = worst_zeta.max(rep.max_rho_zeta);
        worst_x = worst_x.max(rep.max_rho_x);
        floor = floor.min(rep.min_sigma);
    }
    assert!(worst_zeta < 1e-8, "max |rho_zeta| = {worst_zeta}");
    assert!(worst_x < 1e-8, "max |rho_x| = {worst_x}");
    assert!(floor >= -1e-10, "min Sigma = {floor}");
    println!(
        "acceptance criterion 07 (first-order residuals): PASS \
         (|rho_zeta| <= {worst_zeta:.2e}, |rho_x| <= {worst_x:.2e}, min Sigma = {floor:.3})"
    );
}

#[test]
fn criterion_08_spike_checks() {
    let g = grid(2000);
    let start = Instant::now();
    let mut summary = String::new();
    for spec in [state(2.0, 10.0), ctrl(2.0, 10.0)] {
        let sol = solve(&spec, &g);
        let ladder = spike_ladder(
            SpikeKind::Investment,
            &[1.0],
            &[1e-2, 1e-3, 1e-4],
            &spec,
            &sol.policy,
        )
        .unwrap();
        let q = *ladder.quotients.last().unwrap();
        let rel = (q - ladder.predicted).abs() / ladder.predicted.abs();
        assert!(
            rel < 0.01,
            "u-spike quotient {q} vs predicted {} (rel {rel})",
            ladder.predicted
        );
        summary.push_str(&format!(" u-rel {rel:.1e}"));

        for eta in [0.25, -0.25, 0.5, -0.5, 1.0, -1.0] {
            let q =
                spike_quotient(SpikeKind::Distortion, &[eta], 1e-4, &spec, &sol.policy).unwrap();
            assert!(q <= 1e-6, "h-spike quotient {q} at eta = {eta}");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "spike checks took {elapsed:.2}s");
    println!(
        "acceptance criterion 08 (spike checks): PASS \
         ({summary}, h-spikes <= 1e-6, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_09_change_of_measure_mc() {
    let g = grid(2000);
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for spec in [state(2.0, 10.0), ctrl(2.0, 10.0)] {
        let sol = solve(&spec, &g);
        let start = Instant::now();
        let rep = mc_cross_check(&sol.policy, &spec, &g, 100_000, 7).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        worst = worst.max(rep.max_abs_z());
        assert!(rep.weight.std_error > 0.0);
    }
    assert!(worst < 4.0, "max |z| = {worst}");
    assert!(slowest < 10.0, "MC run took {slowest:.2}s");
    println!(
        "acceptance criterion 09 (change-of-measure MC): PASS \
         (max |z| = {worst:.2}, slowest run {slowest:.2}s)"
    );
}

/// Largest horizon at which the certificate still passes with default
/// constants, to grid resolution 1e-4 (bisection).
fn certified_horizon(mode: AmbiguityMode) -> f64 {
    let certify = |t: f64| -> bool {
        let spec = benchmark_spec::<f64>(mode, 2.0, 10.0).with_horizon(t);
        let g = TimeGrid::new(t, 400);
        let cert = match mode {
            AmbiguityMode::StateDep => certify_state(&spec, &g, None).unwrap(),
            AmbiguityMode::CtrlDep => certify_ctrl(&spec, &g, None).unwrap(),
        };
        cert.verdict
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    assert!(certify(lo) && !certify(hi));
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if certify(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn criterion_10_wellposedness_certificates() {
    // Regression constants from the bisection on the benchmark defaults.
    let t_state = certified_horizon(AmbiguityMode::StateDep);
    assert!(
        (0.030..0.050).contains(&t_state),
        "state-dependent certified horizon {t_state}"
    );
    let t_ctrl = certified_horizon(AmbiguityMode::CtrlDep);
    assert!(
        (0.030..0.060).contains(&t_ctrl),
        "control-dependent certified horizon {t_ctrl}"
    );

    // Graceful failure with a named margin when m_upper breaks the
    // discriminant inequality.
    let spec = ctrl(2.0, 10.0).with_horizon(0.02);
    let g = TimeGrid::new(0.02, 200);
    let cert = certify_ctrl(
        &spec,
        &g,
        Some(CtrlCertConstants {
            m_lower: 0.9,
            m_upper: 20.0,
            delta_upper: 2.5,
            e_upper: 2.5,
            phi: Some(1e-9),
        }),
    )
    .unwrap();
    assert!(!cert.verdict);
    let margin = cert.margin("discriminant_nonnegative").unwrap();
    assert!(!margin.satisfied && margin.slack < 0.0);
    println!(
        "acceptance criterion 10 (well-posedness certificates): PASS \
         (certified horizons {t_state:.4} / {t_ctrl:.4}; discriminant margin {:.3})",
        margin.slack
    );
}

#[test]
fn criterion_11_rk4_convergence_order() {
    // Max-node error against a 16000-step reference, on shared nodes.
    let reference_steps = 16000;
    let coarse = 250;

    let ratio_for = |solve_at: &dyn Fn(usize) -> Vec<[f64; 6]>| -> f64 {
        let reference = solve_at(reference_steps);
        let err = |steps: usize| -> f64 {
            let sol = solve_at(steps);
            let stride = reference_steps / steps;
            let mut worst = 0.0f64;
            for k in 0..=steps {
                for c in 0..6 {
                    worst = worst.max((sol[k][c] - reference[k * stride][c]).abs());
                }
            }
            worst
        };
        err(coarse) / err(2 * coarse)
    };

    let state_ratio = ratio_for(&|steps| {
        solve_state(&state(2.0, 10.0), &grid(steps))
            .unwrap()
            .coeffs
            .nodes
            .iter()
            .map(|n| n.to_array())
            .collect()
    });
    let ctrl_ratio = ratio_for(&|steps| {
        solve_ctrl(&ctrl(2.0, 10.0), &grid(steps))
            .unwrap()
            .coeffs
            .nodes
            .iter()
            .map(|n| n.to_array())
            .collect()
    });

    // Closed-loop baseline: compare the investment path itself.
    let closed_at = |steps: usize| -> Vec<f64> {
        closed_loop_nonrobust(&state(2.0, 10.0), &grid(steps))
            .unwrap()
            .alpha
            .iter()
            .map(|a| a[0])
            .collect()
    };
    let reference = closed_at(reference_steps);
    let closed_err = |steps: usize| -> f64 {
        let path = closed_at(steps);
        let stride = reference_steps / steps;
        (0..=steps)
            .map(|k| (path[k] - reference[k * stride]).abs())
            .fold(0.0f64, f64::max)
    };
    let closed_ratio = closed_err(coarse) / closed_err(2 * coarse);

    for (name, ratio) in [
        ("state-dependent", state_ratio),
        ("control-dependent", ctrl_ratio),
        ("closed-loop baseline", closed_ratio),
    ] {
        assert!(
            (12.0..=20.0).contains(&ratio),
            "{name} error ratio {ratio} outside [12, 20]"
        );
    }
    println!(
        "acceptance criterion 11 (RK4 convergence order): PASS \
         (ratios {state_ratio:.1} / {ctrl_ratio:.1} / {closed_ratio:.1})"
    );
}

#[test]
fn terminal_stats_matches_independent_oracle() {
    // Frozen from an independent adaptive integration of the benchmark.
    let g = grid(2000);
    let spec = state(2.0, 10.0);
    let sol = solve(&spec, &g);
    let (mean, var) = terminal_stats(&sol.policy, &spec, &g);
    assert!((mean - 1.175833588786801).abs() < 1e-9);
    assert!((var.sqrt() - 0.6766612130375784).abs() < 1e-9);

    let spec = ctrl(2.0, 10.0);
    let sol = solve(&spec, &g);
    let (mean, var) = terminal_stats(&sol.policy, &spec, &g);
    assert!((mean - 1.0906570960759479).abs() < 1e-9);
    assert!((var.sqrt() - 0.8834626467415326).abs() < 1e-9);
}
