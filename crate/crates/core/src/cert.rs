//! Well-posedness certificate plumbing shared by both ambiguity modes.
//!
//! The existence proofs truncate the coefficient system and trap each
//! variable between closed-form envelopes driven by solution-independent
//! coefficient bounds. A certificate evaluates those envelopes on the grid
//! and records, for every required inequality, the most binding node and its
//! slack. Verdicts are sufficient-condition checks: a failed certificate
//! downgrades a solve to "uncertified", it does not invalidate it.

use serde::Serialize;

use crate::model::TimeGrid;
use crate::real::Real;

/// One certified inequality: `slack >= 0` iff satisfied, evaluated at the
/// most binding grid node.
#[derive(Debug, Clone, Serialize)]
pub struct Margin {
    pub name: String,
    pub satisfied: bool,
    pub slack: f64,
    pub worst_time: f64,
}

impl Margin {
    /// Build from oriented per-node slacks (NaN slack counts as violated).
    pub fn from_slacks<R: Real>(name: &str, grid: &TimeGrid<R>, slacks: &[R]) -> Self {
        let mut worst = 0usize;
        let mut worst_slack = f64::INFINITY;
        for (k, s) in slacks.iter().enumerate() {
            let s = s.as_f64();
            if s.is_nan() {
                worst = k;
                worst_slack = f64::NAN;
                break;
            }
            if s < worst_slack {
                worst_slack = s;
                worst = k;
            }
        }
        Margin {
            name: name.to_string(),
            satisfied: worst_slack >= 0.0,
            slack: worst_slack,
            worst_time: grid.node(worst).as_f64(),
        }
    }

    /// Build from a single scalar slack.
    pub fn scalar(name: &str, slack: f64, worst_time: f64) -> Self {
        Margin {
            name: name.to_string(),
            satisfied: slack >= 0.0 && !slack.is_nan(),
            slack,
            worst_time,
        }
    }
}

/// A constant the certificate was evaluated with.
#[derive(Debug, Clone, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

impl NamedValue {
    pub fn new(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
        }
    }
}

/// Certificate verdict plus every evaluated margin.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub verdict: bool,
    pub constants: Vec<NamedValue>,
    pub margins: Vec<Margin>,
    /// Extra context (e.g. the underlying solve failed, leaving a condition
    /// unevaluable).
    pub note: Option<String>,
}

impl Certificate {
    pub fn from_margins(constants: Vec<NamedValue>, margins: Vec<Margin>) -> Self {
        let verdict = margins.iter().all(|m| m.satisfied);
        Certificate {
            verdict,
            constants,
            margins,
            note: None,
        }
    }

    pub fn margin(&self, name: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.name == name)
    }
}
