//! Mean-variance analytics and frontier sweeps.
//!
//! Terminal wealth under the worst-case measure is lognormal with
//!
//! ```text
//! E*[X_T]   = x0 exp(int_0^T (A + B'alpha + sigma'h) ds)
//! Var*[X_T] = x0^2 exp(2 int ...) (exp(int_0^T |sigma|^2 ds) - 1)
//! ```
//!
//! where `sigma = C + D alpha` is the wealth volatility loading (just
//! `alpha` itself in the market application, where `C = 0`, `D = 1`, so the
//! drift reduces to `A + (B + h)'alpha`). Sweeps re-solve the equilibrium per
//! row and are embarrassingly parallel; rows that cannot be solved are
//! carried with a status instead of dropped so frontier plots show gaps
//! honestly.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baseline::BaselinePath;
use crate::ctrldep::solve_ctrl;
use crate::error::SolveError;
use crate::model::{AmbiguityMode, ModelSpec, TimeGrid};
use crate::quad::integral;
use crate::real::Real;
use crate::solution::Policy;
use crate::statedep::solve_state;

/// How a sweep row ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RowStatus {
    Ok,
    /// Analytic degenerate row (e.g. control-dependent mode at `mu1 = 0`).
    Degenerate(String),
    Failed(String),
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Ok => write!(f, "ok"),
            RowStatus::Degenerate(msg) => write!(f, "degenerate: {msg}"),
            RowStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

/// One frontier row.
#[derive(Debug, Clone)]
pub struct FrontierPoint<R: Real> {
    /// The swept parameter value for this row.
    pub swept: R,
    pub mu1: R,
    pub xi: R,
    pub mean: R,
    pub std_dev: R,
    pub alpha0: Vec<R>,
    pub status: RowStatus,
}

/// An investment path with an optional distortion, as consumed by
/// [`terminal_stats`].
pub trait InvestmentPath<R: Real> {
    fn alpha(&self, node: usize) -> &[R];
    fn distortion(&self, node: usize) -> Option<&[R]>;
}

impl<R: Real> InvestmentPath<R> for Policy<R> {
    fn alpha(&self, node: usize) -> &[R] {
        &self.nodes[node].alpha
    }
    fn distortion(&self, node: usize) -> Option<&[R]> {
        Some(&self.nodes[node].distortion)
    }
}

impl<R: Real> InvestmentPath<R> for BaselinePath<R> {
    fn alpha(&self, node: usize) -> &[R] {
        &self.alpha[node]
    }
    fn distortion(&self, _node: usize) -> Option<&[R]> {
        None
    }
}

/// Mean and variance of terminal wealth under the path's measure
/// (the reference measure when no distortion is present).
pub fn terminal_stats<R: Real>(
    path: &dyn InvestmentPath<R>,
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
) -> (R, R) {
    let sampled = spec.sample(grid).expect("grid within horizon");
    let n = grid.len();
    let mut drift = vec![R::zero(); n];
    let mut vol2 = vec![R::zero(); n];
    for k in 0..n {
        let alpha = path.alpha(k);
        let mut d = sampled.rate[k];
        let mut v2 = R::zero();
        for j in 0..spec.dim {
            let sigma = sampled.state_vol[j][k] + sampled.ctrl_vol[j][k] * alpha[j];
            d += sampled.sharpe[j][k] * alpha[j];
            if let Some(h) = path.distortion(k) {
                d += sigma * h[j];
            }
            v2 += sigma * sigma;
        }
        drift[k] = d;
        vol2[k] = v2;
    }
    let growth = integral(grid, &drift);
    let total_var = integral(grid, &vol2);
    let mean = spec.x0 * growth.exp();
    let variance = spec.x0 * spec.x0 * (R::of(2.0) * growth).exp() * (total_var.exp() - R::one());
    (mean, variance)
}

/// Invalid sweep input (checked before any row runs).
#[derive(Debug, Clone, Error)]
pub enum SweepError {
    #[error("ambiguity values must be strictly positive, got {value}")]
    NonPositiveXi { value: f64 },
    #[error("relation produced non-positive xi = {xi} at mu1 = {mu1}")]
    NonPositiveRelationXi { mu1: f64, xi: f64 },
}

fn zero_policy_row<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    swept: R,
    status: RowStatus,
) -> FrontierPoint<R> {
    // alpha = h = 0: wealth grows at the risk-free rate with zero variance.
    let zeros = BaselinePath {
        kind: crate::baseline::BaselineKind::OpenLoopNonRobust,
        grid: *grid,
        alpha: vec![vec![R::zero(); spec.dim]; grid.len()],
    };
    let (mean, var) = terminal_stats(&zeros, spec, grid);
    FrontierPoint {
        swept,
        mu1: spec.risk_aversion,
        xi: spec.ambiguity,
        mean,
        std_dev: var.sqrt(),
        alpha0: vec![R::zero(); spec.dim],
        status,
    }
}

fn failed_row<R: Real>(spec: &ModelSpec<R>, swept: R, err: &SolveError) -> FrontierPoint<R> {
    FrontierPoint {
        swept,
        mu1: spec.risk_aversion,
        xi: spec.ambiguity,
        mean: R::nan(),
        std_dev: R::nan(),
        alpha0: vec![R::nan(); spec.dim],
        status: RowStatus::Failed(err.to_string()),
    }
}

/// Solve one configured row.
pub fn frontier_row<R: Real>(spec: &ModelSpec<R>, grid: &TimeGrid<R>, swept: R) -> FrontierPoint<R> {
    let solved = match spec.mode {
        AmbiguityMode::StateDep => solve_state(spec, grid),
        AmbiguityMode::CtrlDep => solve_ctrl(spec, grid),
    };
    match solved {
        Ok(sol) => {
            let (mean, var) = terminal_stats(&sol.policy, spec, grid);
            FrontierPoint {
                swept,
                mu1: spec.risk_aversion,
                xi: spec.ambiguity,
                mean,
                std_dev: var.sqrt(),
                alpha0: sol.policy.nodes[0].alpha.clone(),
                status: RowStatus::Ok,
            }
        }
        Err(SolveError::RiskNeutralCtrl) => zero_policy_row(
            spec,
            grid,
            swept,
            RowStatus::Degenerate("mu1 = 0: equilibrium pair h* = 0, u* = 0".into()),
        ),
        Err(e) => failed_row(spec, swept, &e),
    }
}

fn run_rows<R: Real>(
    specs: Vec<(R, ModelSpec<R>)>,
    grid: &TimeGrid<R>,
    threads: usize,
) -> Vec<FrontierPoint<R>> {
    if threads == 0 {
        specs
            .iter()
            .map(|(swept, spec)| frontier_row(spec, grid, *swept))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            specs
                .par_iter()
                .map(|(swept, spec)| frontier_row(spec, grid, *swept))
                .collect()
        })
    }
}

/// Vary `mu1` with `xi` held fixed. `threads = 0` runs rows sequentially;
/// either way rows come back in input order and bitwise identical.
pub fn sweep_risk<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    mu1_values: &[R],
    threads: usize,
) -> Vec<FrontierPoint<R>> {
    let specs = mu1_values
        .iter()
        .map(|&m| (m, spec.with_risk_aversion(m)))
        .collect();
    run_rows(specs, grid, threads)
}

/// Vary `xi` with `mu1` held fixed. Zero or negative values are rejected up
/// front: the zero-ambiguity limits are asymptotic statements, not rows.
pub fn sweep_ambiguity<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    xi_values: &[R],
    threads: usize,
) -> Result<Vec<FrontierPoint<R>>, SweepError> {
    for &xi in xi_values {
        if !(xi > R::zero()) {
            return Err(SweepError::NonPositiveXi {
                value: xi.as_f64(),
            });
        }
    }
    let specs = xi_values
        .iter()
        .map(|&xi| (xi, spec.with_ambiguity(xi)))
        .collect();
    Ok(run_rows(specs, grid, threads))
}

/// Couplings between risk and ambiguity aversion for [`relation_sweep`].
#[derive(Debug, Clone, Copy)]
pub enum RelationForm<R: Real> {
    /// `xi = a0 + a1 mu1`
    Linear { a0: R, a1: R },
    /// `xi = a1 mu1^2`
    Quadratic { a1: R },
}

impl<R: Real> RelationForm<R> {
    pub fn xi(&self, mu1: R) -> R {
        match *self {
            RelationForm::Linear { a0, a1 } => a0 + a1 * mu1,
            RelationForm::Quadratic { a1 } => a1 * mu1 * mu1,
        }
    }
}

/// Sweep `mu1` with `xi` coupled through `form`.
pub fn relation_sweep<R: Real>(
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    form: RelationForm<R>,
    mu1_values: &[R],
    threads: usize,
) -> Result<Vec<FrontierPoint<R>>, SweepError> {
    let mut specs = Vec::with_capacity(mu1_values.len());
    for &mu1 in mu1_values {
        let xi = form.xi(mu1);
        if !(xi > R::zero()) {
            return Err(SweepError::NonPositiveRelationXi {
                mu1: mu1.as_f64(),
                xi: xi.as_f64(),
            });
        }
        specs.push((mu1, spec.with_risk_aversion(mu1).with_ambiguity(xi)));
    }
    Ok(run_rows(specs, grid, threads))
}
