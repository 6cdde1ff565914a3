//! Model specifications, coefficient schedules, and the solver time grid.

use serde::Deserialize;

use crate::error::SolveError;
use crate::real::Real;

/// Deterministic time-dependent coefficient: either a constant or a table of
/// `(time, value)` knots on `[0, T]` with linear interpolation between knots.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<R: Real> {
    Constant(R),
    Table(Vec<(R, R)>),
}

impl<R: Real> Schedule<R> {
    pub fn constant(v: R) -> Self {
        Schedule::Constant(v)
    }

    pub fn table(knots: Vec<(R, R)>) -> Self {
        Schedule::Table(knots)
    }

    /// Value at `t`. Assumes valid knots; clamps to the end values so that
    /// round-off overshoot at the grid boundary stays harmless. Domain checks
    /// against `[0, T]` happen in [`ModelSpec::coeffs_at`].
    pub fn eval(&self, t: R) -> R {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Table(knots) => {
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                let last = knots.len() - 1;
                if t >= knots[last].0 {
                    return knots[last].1;
                }
                let hi = knots.partition_point(|&(tk, _)| tk <= t);
                let (t0, v0) = knots[hi - 1];
                let (t1, v1) = knots[hi];
                let w = (t - t0) / (t1 - t0);
                v0 + w * (v1 - v0)
            }
        }
    }

    /// True when the schedule is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            Schedule::Constant(v) => *v == R::zero(),
            Schedule::Table(knots) => knots.iter().all(|&(_, v)| v == R::zero()),
        }
    }

    /// Knot-shape violations relative to a horizon, if any.
    fn knot_problem(&self, horizon: R) -> Option<String> {
        let Schedule::Table(knots) = self else {
            return None;
        };
        if knots.is_empty() {
            return Some("table has no knots".into());
        }
        if knots[0].0 != R::zero() {
            return Some("first knot time must be 0".into());
        }
        if knots[knots.len() - 1].0 != horizon {
            return Some(format!(
                "last knot time must equal the horizon T = {horizon}"
            ));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Some(format!(
                    "knot times must be strictly increasing (got {} then {})",
                    w[0].0, w[1].0
                ));
            }
        }
        None
    }
}

/// Uniform grid `t_k = k T / steps`, `k = 0..=steps`, shared by the backward
/// integrator, the quadratures, and all emitted paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<R: Real> {
    horizon: R,
    steps: usize,
}

impl<R: Real> TimeGrid<R> {
    /// Panics if `steps == 0` or the horizon is not positive.
    pub fn new(horizon: R, steps: usize) -> Self {
        assert!(steps > 0, "time grid needs at least one step");
        assert!(horizon > R::zero(), "horizon must be positive");
        Self { horizon, steps }
    }

    pub fn horizon(&self) -> R {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> R {
        self.horizon / R::of_count(self.steps)
    }

    /// `t_k`; exact at both endpoints (`k/steps` is 0 or 1 exactly there).
    pub fn node(&self, k: usize) -> R {
        debug_assert!(k <= self.steps);
        self.horizon * (R::of_count(k) / R::of_count(self.steps))
    }

    pub fn times(&self) -> Vec<R> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self::new(self.horizon, self.steps * factor)
    }
}

/// Which ambiguity-aversion penalty the adversary faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityMode {
    /// Penalty `xi1 * X^2` per driver (scales with squared wealth).
    StateDep,
    /// Penalty `xi2 * l * u_j^2` per driver (scales with squared investment).
    CtrlDep,
}

/// Full model and preference specification.
///
/// Conventions: the state is scalar wealth, the number of Brownian drivers
/// equals the control dimension `d`, and the volatility loading of driver `j`
/// is `state_vol[j] * X + ctrl_vol[j] * u_j`. The general formulation's
/// `b`, `sigma^j`, `mu2` and constant ambiguity intercepts are fixed to zero
/// and not represented.
#[derive(Debug, Clone)]
pub struct ModelSpec<R: Real> {
    pub mode: AmbiguityMode,
    /// Number of Brownian drivers = control dimension.
    pub dim: usize,
    /// Horizon `T` in years.
    pub horizon: R,
    /// Initial wealth, strictly positive.
    pub x0: R,
    /// Risk-free rate / state drift `A`.
    pub rate: Schedule<R>,
    /// Sharpe-ratio vector `B`, one schedule per driver.
    pub sharpe: Vec<Schedule<R>>,
    /// State volatility loadings `C`, one per driver; identically zero in
    /// control-dependent mode.
    pub state_vol: Vec<Schedule<R>>,
    /// Control volatility loadings `D`, one per driver; a single scalar times
    /// the identity in control-dependent mode.
    pub ctrl_vol: Vec<Schedule<R>>,
    /// Running state weight `Q >= 0`.
    pub state_cost: Schedule<R>,
    /// Running control weight `R >= 0` (scalar times identity).
    pub ctrl_cost: Schedule<R>,
    /// Terminal quadratic weight `G >= 0`.
    pub terminal_weight: R,
    /// Variance weight `nu >= 0`.
    pub variance_weight: R,
    /// Risk-aversion coefficient `mu1 >= 0` (larger = less risk-averse).
    pub risk_aversion: R,
    /// Ambiguity-aversion weight `xi > 0` (`xi1` or `xi2` by mode).
    pub ambiguity: R,
}

/// Model coefficients evaluated at one time point.
#[derive(Debug, Clone)]
pub struct Coeffs<R: Real> {
    pub rate: R,
    pub sharpe: Vec<R>,
    pub state_vol: Vec<R>,
    pub ctrl_vol: Vec<R>,
    pub state_cost: R,
    pub ctrl_cost: R,
}

/// Coefficients evaluated on every grid node (driver-major for the vectors).
#[derive(Debug, Clone)]
pub struct SampledCoeffs<R: Real> {
    pub rate: Vec<R>,
    pub sharpe: Vec<Vec<R>>,
    pub state_vol: Vec<Vec<R>>,
    pub ctrl_vol: Vec<Vec<R>>,
    pub state_cost: Vec<R>,
    pub ctrl_cost: Vec<R>,
}

/// One violated admissibility invariant; data, not a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    /// First grid node where the invariant fails, when node-local.
    pub node: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node {
            Some(k) => write!(f, "field `{}`: {} (node {})", self.field, self.message, k),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl<R: Real> ModelSpec<R> {
    /// Collect every violated invariant for this spec on `grid`. Empty means
    /// admissible for the declared mode. Never fails: violations are data.
    pub fn validate(&self, grid: &TimeGrid<R>) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field, node, message: String| {
            out.push(Violation {
                field,
                node,
                message,
            })
        };

        if self.horizon <= R::zero() {
            push("T", None, "horizon must be positive".into());
        }
        if self.x0 <= R::zero() {
            push("x0", None, "initial wealth must be strictly positive".into());
        }
        if self.dim == 0 {
            push("d", None, "at least one driver is required".into());
        }
        if self.terminal_weight < R::zero() {
            push("G", None, "terminal weight must be non-negative".into());
        }
        if self.variance_weight < R::zero() {
            push("nu", None, "variance weight must be non-negative".into());
        }
        if self.risk_aversion < R::zero() {
            push("mu1", None, "risk aversion must be non-negative".into());
        }
        if self.ambiguity <= R::zero() {
            push("xi", None, "ambiguity aversion must be strictly positive".into());
        }

        for (field, schedules) in [
            ("B", &self.sharpe),
            ("C", &self.state_vol),
            ("D", &self.ctrl_vol),
        ] {
            if schedules.len() != self.dim {
                push(
                    field,
                    None,
                    format!("expected {} schedules, got {}", self.dim, schedules.len()),
                );
            }
        }

        let scalars: [(&'static str, &Schedule<R>); 3] = [
            ("A", &self.rate),
            ("Q", &self.state_cost),
            ("R", &self.ctrl_cost),
        ];
        for (field, s) in scalars {
            if let Some(msg) = s.knot_problem(self.horizon) {
                push(field, None, msg);
            }
        }
        for (field, schedules) in [
            ("B", &self.sharpe),
            ("C", &self.state_vol),
            ("D", &self.ctrl_vol),
        ] {
            for s in schedules {
                if let Some(msg) = s.knot_problem(self.horizon) {
                    push(field, None, msg);
                }
            }
        }

        // Sign conditions checked node by node; report the first offender.
        let first_bad = |s: &Schedule<R>| -> Option<usize> {
            (0..grid.len()).find(|&k| s.eval(grid.node(k)) < R::zero())
        };
        if let Some(k) = first_bad(&self.state_cost) {
            push("Q", Some(k), "running state weight must be non-negative".into());
        }
        if let Some(k) = first_bad(&self.ctrl_cost) {
            push("R", Some(k), "running control weight must be non-negative".into());
        }

        let c_is_zero = self.state_vol.iter().all(Schedule::is_zero);
        match self.mode {
            AmbiguityMode::StateDep => {
                // With state volatility present the variance weight must not
                // exceed the terminal weight; with C = 0 that requirement is
                // waived.
                if !c_is_zero && self.terminal_weight < self.variance_weight {
                    push(
                        "G",
                        None,
                        "G >= nu is required when any state volatility loading is nonzero".into(),
                    );
                }
            }
            AmbiguityMode::CtrlDep => {
                if !c_is_zero {
                    push("C", None, "C must be 0 in CtrlDep mode".into());
                }
                // Scalar-times-identity control volatility: all drivers must
                // carry the same schedule on the grid.
                if let Some(first) = self.ctrl_vol.first() {
                    'outer: for s in &self.ctrl_vol[1..] {
                        for k in 0..grid.len() {
                            let t = grid.node(k);
                            if s.eval(t) != first.eval(t) {
                                push(
                                    "D",
                                    Some(k),
                                    "control volatility must be a single scalar schedule in CtrlDep mode"
                                        .into(),
                                );
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Evaluate all coefficients at `t`, rejecting points outside `[0, T]`.
    pub fn coeffs_at(&self, t: R) -> Result<Coeffs<R>, SolveError> {
        if t < R::zero() || t > self.horizon {
            return Err(SolveError::OutOfDomain {
                t: t.as_f64(),
                horizon: self.horizon.as_f64(),
            });
        }
        Ok(Coeffs {
            rate: self.rate.eval(t),
            sharpe: self.sharpe.iter().map(|s| s.eval(t)).collect(),
            state_vol: self.state_vol.iter().map(|s| s.eval(t)).collect(),
            ctrl_vol: self.ctrl_vol.iter().map(|s| s.eval(t)).collect(),
            state_cost: self.state_cost.eval(t),
            ctrl_cost: self.ctrl_cost.eval(t),
        })
    }

    /// Deterministic per-node evaluation of every coefficient.
    pub fn sample(&self, grid: &TimeGrid<R>) -> Result<SampledCoeffs<R>, SolveError> {
        if grid.horizon() > self.horizon {
            return Err(SolveError::OutOfDomain {
                t: grid.horizon().as_f64(),
                horizon: self.horizon.as_f64(),
            });
        }
        let times = grid.times();
        let eval_vec = |ss: &[Schedule<R>]| -> Vec<Vec<R>> {
            ss.iter()
                .map(|s| times.iter().map(|&t| s.eval(t)).collect())
                .collect()
        };
        Ok(SampledCoeffs {
            rate: times.iter().map(|&t| self.rate.eval(t)).collect(),
            sharpe: eval_vec(&self.sharpe),
            state_vol: eval_vec(&self.state_vol),
            ctrl_vol: eval_vec(&self.ctrl_vol),
            state_cost: times.iter().map(|&t| self.state_cost.eval(t)).collect(),
            ctrl_cost: times.iter().map(|&t| self.ctrl_cost.eval(t)).collect(),
        })
    }

    /// Control dimension `l` (= number of drivers).
    pub fn ell(&self) -> usize {
        self.dim
    }

    /// `xi2 * l`, the combined control-dependent penalty weight.
    pub fn xi_ell(&self) -> R {
        self.ambiguity * R::of_count(self.dim)
    }

    /// True when every state volatility loading is identically zero.
    pub fn state_vol_is_zero(&self) -> bool {
        self.state_vol.iter().all(Schedule::is_zero)
    }

    /// Clone with a different risk aversion.
    pub fn with_risk_aversion(&self, mu1: R) -> Self {
        let mut s = self.clone();
        s.risk_aversion = mu1;
        s
    }

    /// Clone with a different ambiguity aversion.
    pub fn with_ambiguity(&self, xi: R) -> Self {
        let mut s = self.clone();
        s.ambiguity = xi;
        s
    }

    /// Clone with a different horizon (constant schedules only, used by the
    /// certificate bisection).
    pub fn with_horizon(&self, horizon: R) -> Self {
        let mut s = self.clone();
        s.horizon = horizon;
        s
    }
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

/// Errors turning a JSON document into a [`ModelSpec`].
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCoeff {
    Constant(f64),
    Table { table: Vec<(f64, f64)> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawVecCoeff {
    One(RawCoeff),
    Many(Vec<RawCoeff>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    #[serde(rename = "T")]
    horizon: f64,
    steps: Option<usize>,
    d: Option<usize>,
    x0: f64,
    #[serde(rename = "G")]
    terminal_weight: f64,
    nu: f64,
    mu1: f64,
    xi: f64,
    #[serde(rename = "A")]
    rate: RawCoeff,
    #[serde(rename = "B")]
    sharpe: RawVecCoeff,
    #[serde(rename = "C")]
    state_vol: RawVecCoeff,
    #[serde(rename = "D")]
    ctrl_vol: RawVecCoeff,
    #[serde(rename = "Q")]
    state_cost: RawCoeff,
    #[serde(rename = "R")]
    ctrl_cost: RawCoeff,
}

impl RawCoeff {
    fn schedule<R: Real>(&self) -> Schedule<R> {
        match self {
            RawCoeff::Constant(v) => Schedule::Constant(R::of(*v)),
            RawCoeff::Table { table } => Schedule::Table(
                table.iter().map(|&(t, v)| (R::of(t), R::of(v))).collect(),
            ),
        }
    }
}

impl RawVecCoeff {
    fn schedules<R: Real>(&self, d: usize) -> Result<Vec<Schedule<R>>, String> {
        match self {
            RawVecCoeff::One(c) => Ok(vec![c.schedule(); d]),
            RawVecCoeff::Many(cs) if cs.len() == d => {
                Ok(cs.iter().map(RawCoeff::schedule).collect())
            }
            RawVecCoeff::Many(cs) => Err(format!("expected {} entries, got {}", d, cs.len())),
        }
    }

    fn len_hint(&self) -> Option<usize> {
        match self {
            RawVecCoeff::One(_) => None,
            RawVecCoeff::Many(cs) => Some(cs.len()),
        }
    }
}

/// Parse a model configuration document. Returns the spec plus the requested
/// step count (defaulting to 2000 when the config omits `steps`).
pub fn from_json_str<R: Real>(text: &str) -> Result<(ModelSpec<R>, usize), ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let mode = match raw.mode.as_str() {
        "state_dep" => AmbiguityMode::StateDep,
        "ctrl_dep" => AmbiguityMode::CtrlDep,
        other => {
            return Err(ConfigError::Field {
                field: "mode",
                message: format!("expected \"state_dep\" or \"ctrl_dep\", got \"{other}\""),
            })
        }
    };
    let dim = raw
        .d
        .or_else(|| raw.sharpe.len_hint())
        .or_else(|| raw.state_vol.len_hint())
        .unwrap_or(1);
    if dim == 0 {
        return Err(ConfigError::Field {
            field: "d",
            message: "dimension must be at least 1".into(),
        });
    }
    let vec_field = |field: &'static str, c: &RawVecCoeff| {
        c.schedules::<R>(dim)
            .map_err(|message| ConfigError::Field { field, message })
    };
    let spec = ModelSpec {
        mode,
        dim,
        horizon: R::of(raw.horizon),
        x0: R::of(raw.x0),
        rate: raw.rate.schedule(),
        sharpe: vec_field("B", &raw.sharpe)?,
        state_vol: vec_field("C", &raw.state_vol)?,
        ctrl_vol: vec_field("D", &raw.ctrl_vol)?,
        state_cost: raw.state_cost.schedule(),
        ctrl_cost: raw.ctrl_cost.schedule(),
        terminal_weight: R::of(raw.terminal_weight),
        variance_weight: R::of(raw.nu),
        risk_aversion: R::of(raw.mu1),
        ambiguity: R::of(raw.xi),
    };
    Ok((spec, raw.steps.unwrap_or(2000)))
}

/// The benchmark market of the numerical experiments: `A = 0.02`,
/// `B = 0.375`, unit wealth, one-year horizon, `G = nu = 1`, `D = 1`,
/// `Q = R = C = 0`.
pub fn benchmark_spec<R: Real>(mode: AmbiguityMode, mu1: f64, xi: f64) -> ModelSpec<R> {
    ModelSpec {
        mode,
        dim: 1,
        horizon: R::one(),
        x0: R::one(),
        rate: Schedule::Constant(R::of(0.02)),
        sharpe: vec![Schedule::Constant(R::of(0.375))],
        state_vol: vec![Schedule::Constant(R::zero())],
        ctrl_vol: vec![Schedule::Constant(R::one())],
        state_cost: Schedule::Constant(R::zero()),
        ctrl_cost: Schedule::Constant(R::zero()),
        terminal_weight: R::one(),
        variance_weight: R::one(),
        risk_aversion: R::of(mu1),
        ambiguity: R::of(xi),
    }
}
