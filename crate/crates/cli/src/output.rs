//! CSV writers. Floats are printed with 17 significant digits so files are
//! round-trip exact and stable across runs.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rlq_core::baseline::BaselinePath;
use rlq_core::model::TimeGrid;
use rlq_core::mv::FrontierPoint;
use rlq_core::Solution;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,alpha_1..d,h_1..d,L,H,F,M,N,Gamma,Delta,E,P_tt,Sigma_min`
pub fn write_policy_csv(
    path: &Path,
    sol: &Solution,
    grid: &TimeGrid<f64>,
) -> io::Result<()> {
    let d = sol.policy.nodes[0].alpha.len();
    let mut out = String::new();
    out.push('t');
    for j in 1..=d {
        let _ = write!(out, ",alpha_{j}");
    }
    for j in 1..=d {
        let _ = write!(out, ",h_{j}");
    }
    out.push_str(",L,H,F,M,N,Gamma,Delta,E,P_tt,Sigma_min\n");
    for k in 0..grid.len() {
        let c = &sol.coeffs.nodes[k];
        let p = &sol.policy.nodes[k];
        let _ = write!(out, "{}", fmt(grid.node(k)));
        for j in 0..d {
            let _ = write!(out, ",{}", fmt(p.alpha[j]));
        }
        for j in 0..d {
            let _ = write!(out, ",{}", fmt(p.distortion[j]));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},{},{},{},{}",
            fmt(c.l),
            fmt(c.h),
            fmt(c.f),
            fmt(c.m),
            fmt(c.n),
            fmt(c.gamma),
            fmt(c.delta()),
            fmt(c.e()),
            fmt(p.p_tt),
            fmt(p.sigma_min),
        );
    }
    std::fs::write(path, out)
}

/// `t,alpha_1..d` (no distortion columns for non-robust baselines).
pub fn write_baseline_csv(
    path: &Path,
    base: &BaselinePath<f64>,
    grid: &TimeGrid<f64>,
) -> io::Result<()> {
    let d = base.alpha[0].len();
    let mut out = String::new();
    out.push('t');
    for j in 1..=d {
        let _ = write!(out, ",alpha_{j}");
    }
    out.push('\n');
    for k in 0..grid.len() {
        let _ = write!(out, "{}", fmt(grid.node(k)));
        for j in 0..d {
            let _ = write!(out, ",{}", fmt(base.alpha[k][j]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// `swept,mu1,xi,mean,std,alpha0_1..d,status`
pub fn write_frontier_csv(
    path: &Path,
    rows: &[FrontierPoint<f64>],
    d: usize,
) -> io::Result<()> {
    let mut out = String::new();
    out.push_str("swept,mu1,xi,mean,std");
    for j in 1..=d {
        let _ = write!(out, ",alpha0_{j}");
    }
    out.push_str(",status\n");
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt(row.swept),
            fmt(row.mu1),
            fmt(row.xi),
            fmt(row.mean),
            fmt(row.std_dev),
        );
        for j in 0..d {
            let _ = write!(out, ",{}", fmt(row.alpha0[j]));
        }
        // Status must stay a single CSV cell.
        let status = row.status.to_string().replace(',', ";");
        let _ = writeln!(out, ",{status}");
    }
    std::fs::write(path, out)
}
