//! Solved coefficient paths and equilibrium policies shared by both modes.

use crate::model::TimeGrid;
use crate::real::Real;

/// The six ansatz coefficients at one grid node.
///
/// `(l, h, f)` come from the distortion adjoint, `(m, n, gamma)` from the
/// investment adjoint. Terminal values are `G/2, nu, mu1, G, nu, mu1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffNode<R: Real> {
    pub l: R,
    pub h: R,
    pub f: R,
    pub m: R,
    pub n: R,
    pub gamma: R,
}

impl<R: Real> CoeffNode<R> {
    pub fn from_slice(y: &[R]) -> Self {
        Self {
            l: y[0],
            h: y[1],
            f: y[2],
            m: y[3],
            n: y[4],
            gamma: y[5],
        }
    }

    pub fn to_array(self) -> [R; 6] {
        [self.l, self.h, self.f, self.m, self.n, self.gamma]
    }

    /// `Delta = M - N - Gamma`, the investment-side gap.
    pub fn delta(&self) -> R {
        self.m - self.n - self.gamma
    }

    /// `E = 2L - H - F`, the distortion-side gap.
    pub fn e(&self) -> R {
        R::of(2.0) * self.l - self.h - self.f
    }
}

/// Backward-solved coefficient system sampled on the grid.
#[derive(Debug, Clone)]
pub struct CoeffPath<R: Real> {
    pub grid: TimeGrid<R>,
    pub nodes: Vec<CoeffNode<R>>,
}

impl<R: Real> CoeffPath<R> {
    pub fn terminal(&self) -> &CoeffNode<R> {
        self.nodes.last().expect("grid has at least two nodes")
    }
}

/// Equilibrium pair at one node plus second-order diagnostics.
#[derive(Debug, Clone)]
pub struct PolicyNode<R: Real> {
    /// Investment fractions of wealth (after the volatility transform).
    pub alpha: Vec<R>,
    /// Worst-case drift distortion per driver.
    pub distortion: Vec<R>,
    /// Second-order adjoint diagonal `P(t; t)`.
    pub p_tt: R,
    /// Smallest eigenvalue of `Sigma(t; t)` (diagonal in this model).
    pub sigma_min: R,
}

/// Equilibrium policy sampled on the grid.
#[derive(Debug, Clone)]
pub struct Policy<R: Real> {
    pub grid: TimeGrid<R>,
    pub nodes: Vec<PolicyNode<R>>,
}

impl<R: Real> Policy<R> {
    pub fn terminal(&self) -> &PolicyNode<R> {
        self.nodes.last().expect("grid has at least two nodes")
    }

    /// Node-major copy of the investment path.
    pub fn alpha_path(&self) -> Vec<Vec<R>> {
        self.nodes.iter().map(|n| n.alpha.clone()).collect()
    }

    /// Node-major copy of the distortion path.
    pub fn distortion_path(&self) -> Vec<Vec<R>> {
        self.nodes.iter().map(|n| n.distortion.clone()).collect()
    }

    pub fn max_abs_alpha(&self) -> R {
        self.nodes
            .iter()
            .flat_map(|n| n.alpha.iter())
            .fold(R::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn min_abs_alpha(&self) -> R {
        self.nodes
            .iter()
            .flat_map(|n| n.alpha.iter())
            .fold(R::infinity(), |acc, &v| acc.min(v.abs()))
    }

    pub fn min_sigma(&self) -> R {
        self.nodes
            .iter()
            .fold(R::infinity(), |acc, n| acc.min(n.sigma_min))
    }
}

/// Solver diagnostics that are not part of the policy itself.
#[derive(Debug, Clone, Default)]
pub struct SolveInfo {
    /// Nodes where the quadratic's linear coefficient nearly vanished and the
    /// root branch was chosen by continuity (control-dependent mode only).
    pub branch_flag_nodes: Vec<usize>,
}

/// A solved equilibrium: coefficients, policy, and diagnostics.
#[derive(Debug, Clone)]
pub struct Solution<R: Real> {
    pub coeffs: CoeffPath<R>,
    pub policy: Policy<R>,
    pub info: SolveInfo,
}
