//! Deterministic fixed-step backward integration with classical RK4.
//!
//! The coefficient systems solved here are terminal-value problems on the
//! uniform solver grid. Fixed steps keep the output bitwise reproducible and
//! node-aligned with policy sampling; coefficients are interpolated at the
//! half-step stage points rather than frozen per step.

use crate::error::SolveError;
use crate::model::TimeGrid;
use crate::real::Real;

/// Right-hand side contract: write `dy/dt` into `out`. Errors abort the
/// integration (e.g. a singular investment-rule matrix at a stage point).
pub trait Rhs<R: Real> {
    fn eval(&mut self, t: R, y: &[R], out: &mut [R]) -> Result<(), SolveError>;
}

impl<R: Real, F> Rhs<R> for F
where
    F: FnMut(R, &[R], &mut [R]) -> Result<(), SolveError>,
{
    fn eval(&mut self, t: R, y: &[R], out: &mut [R]) -> Result<(), SolveError> {
        self(t, y, out)
    }
}

/// A terminal-value problem `dy/dt = rhs(t, y)`, `y(T)` given, integrated
/// from `T` down to `0` on `grid`.
pub struct BackwardProblem<R: Real, F> {
    pub dim: usize,
    pub terminal: Vec<R>,
    pub grid: TimeGrid<R>,
    pub rhs: F,
}

/// Scratch space plus the single-step kernel, reused across steps.
pub struct Rk4<R: Real> {
    k1: Vec<R>,
    k2: Vec<R>,
    k3: Vec<R>,
    k4: Vec<R>,
    stage: Vec<R>,
}

impl<R: Real> Rk4<R> {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![R::zero(); dim],
            k2: vec![R::zero(); dim],
            k3: vec![R::zero(); dim],
            k4: vec![R::zero(); dim],
            stage: vec![R::zero(); dim],
        }
    }

    /// One classical RK4 step from `(t0, y)` to `t1` (here `t1 < t0`).
    /// On a non-finite stage the failing stage index (1..=4) is reported.
    pub fn step<F: Rhs<R>>(
        &mut self,
        rhs: &mut F,
        t0: R,
        t1: R,
        y: &[R],
        out: &mut [R],
    ) -> Result<(), StepFailure> {
        let h = t1 - t0;
        let half = R::of(0.5);
        let mid = half * (t0 + t1);
        let dim = y.len();

        rhs.eval(t0, y, &mut self.k1).map_err(StepFailure::Rhs)?;
        check_finite(&self.k1, 1)?;
        for i in 0..dim {
            self.stage[i] = y[i] + half * h * self.k1[i];
        }
        rhs.eval(mid, &self.stage, &mut self.k2)
            .map_err(StepFailure::Rhs)?;
        check_finite(&self.k2, 2)?;
        for i in 0..dim {
            self.stage[i] = y[i] + half * h * self.k2[i];
        }
        rhs.eval(mid, &self.stage, &mut self.k3)
            .map_err(StepFailure::Rhs)?;
        check_finite(&self.k3, 3)?;
        for i in 0..dim {
            self.stage[i] = y[i] + h * self.k3[i];
        }
        rhs.eval(t1, &self.stage, &mut self.k4)
            .map_err(StepFailure::Rhs)?;
        check_finite(&self.k4, 4)?;

        let sixth = R::of(1.0 / 6.0);
        let two = R::of(2.0);
        for i in 0..dim {
            out[i] = y[i]
                + h * sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Why a single step failed; the driver attaches the node index.
pub enum StepFailure {
    NonFinite { stage: usize },
    Rhs(SolveError),
}

fn check_finite<R: Real>(k: &[R], stage: usize) -> Result<(), StepFailure> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StepFailure::NonFinite { stage })
    }
}

/// Integrate backward from `T` to `0`. Returns the solution at every grid
/// node in ascending time order; the last entry reproduces the terminal value
/// exactly. Output is bitwise reproducible for identical inputs.
pub fn integrate_backward<R: Real, F: Rhs<R>>(
    problem: BackwardProblem<R, F>,
) -> Result<Vec<Vec<R>>, SolveError> {
    let BackwardProblem {
        dim,
        terminal,
        grid,
        mut rhs,
    } = problem;
    assert_eq!(terminal.len(), dim, "terminal value has wrong dimension");

    let mut path = vec![vec![R::zero(); dim]; grid.len()];
    path[grid.steps()] = terminal;
    let mut kernel = Rk4::new(dim);
    for k in (0..grid.steps()).rev() {
        let t0 = grid.node(k + 1);
        let t1 = grid.node(k);
        let (lower, upper) = path.split_at_mut(k + 1);
        match kernel.step(&mut rhs, t0, t1, &upper[0], &mut lower[k]) {
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
    }
    Ok(path)
}
