//! Solver-facing error types.

use thiserror::Error;

/// Hard failures raised while solving or evaluating equilibrium systems.
///
/// Model-admissibility problems are not errors; they are reported as data by
/// [`crate::model::ModelSpec::validate`].
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    /// A coefficient schedule was queried outside `[0, T]`.
    #[error("time {t} is outside the model horizon [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    /// The backward integrator produced a non-finite stage value.
    #[error("non-finite derivative at t = {t} (node {node}, stage {stage})")]
    NonFiniteRhs { node: usize, stage: usize, t: f64 },

    /// The investment-rule matrix `R + (M + Delta E/xi) D'D` lost rank.
    #[error("investment-rule matrix ill-conditioned at t = {t} (condition estimate {cond:.3e})")]
    IllConditioned { t: f64, cond: f64 },

    /// Complex roots: no real equilibrium investment exists at this node.
    #[error("no real equilibrium root at t = {t}, component {component} (discriminant {discriminant:.3e})")]
    NoRealRoot {
        t: f64,
        component: usize,
        discriminant: f64,
    },

    /// The terminal quadratic degenerates to the discarded zero root.
    #[error("zero terminal investment root in component {component}; the equilibrium requires alpha_T != 0")]
    ZeroTerminalRoot { component: usize },

    /// An investment component hit zero so the control-dependent penalty has
    /// no channel to price the distortion.
    #[error("investment component {component} vanished at t = {t}; control-dependent ambiguity degenerates")]
    DegenerateInvestment { t: f64, component: usize },

    /// Control-dependent solves refuse `mu1 = 0` outright.
    #[error("control-dependent mode requires mu1 > 0; at mu1 = 0 the degenerate pair h* = 0, u* = 0 applies")]
    RiskNeutralCtrl,
}

/// Rejected certificate constants, with the violated constraint spelled out.
#[derive(Debug, Clone, Error)]
#[error("invalid certificate constants: {constraint}")]
pub struct ConstantsError {
    pub constraint: String,
}

impl ConstantsError {
    pub fn new(constraint: impl Into<String>) -> Self {
        Self {
            constraint: constraint.into(),
        }
    }
}
