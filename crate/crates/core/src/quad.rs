//! Composite trapezoid quadrature on the solver grid.

use crate::model::TimeGrid;
use crate::real::Real;

/// `int_0^T f dt` from node values, cells accumulated in ascending order.
pub fn integral<R: Real>(grid: &TimeGrid<R>, f: &[R]) -> R {
    debug_assert_eq!(f.len(), grid.len());
    let dt = grid.dt();
    let half = R::of(0.5);
    let mut acc = R::zero();
    for k in 0..grid.steps() {
        acc += half * (f[k] + f[k + 1]) * dt;
    }
    acc
}

/// Backward cumulative integral: `out[k] = int_{t_k}^T f dt`.
pub fn cumulative_to_end<R: Real>(grid: &TimeGrid<R>, f: &[R]) -> Vec<R> {
    debug_assert_eq!(f.len(), grid.len());
    let dt = grid.dt();
    let half = R::of(0.5);
    let mut out = vec![R::zero(); f.len()];
    for k in (0..grid.steps()).rev() {
        out[k] = out[k + 1] + half * (f[k] + f[k + 1]) * dt;
    }
    out
}

/// Terminal-value linear ODE solved in closed form on the grid:
///
/// `y(t) = y_T exp(int_t^T k ds) + int_t^T exp(int_t^u k ds) g(u) du`.
///
/// This is the comparison-envelope shape used by the well-posedness
/// certificates and the second-order adjoint diagonal. Both integrals use the
/// composite trapezoid rule; the exponent is accumulated once backward.
pub fn linear_terminal_ode<R: Real>(
    grid: &TimeGrid<R>,
    coeff: &[R],
    forcing: &[R],
    terminal: R,
) -> Vec<R> {
    debug_assert_eq!(coeff.len(), grid.len());
    debug_assert_eq!(forcing.len(), grid.len());
    let ik = cumulative_to_end(grid, coeff);
    // s[k] = int_{t_k}^T exp(-ik(u)) g(u) du, so that
    // y[k] = exp(ik[k]) * (terminal + s[k]).
    let dt = grid.dt();
    let half = R::of(0.5);
    let mut out = vec![R::zero(); grid.len()];
    let mut s = R::zero();
    out[grid.steps()] = terminal;
    for k in (0..grid.steps()).rev() {
        let a = (-ik[k]).exp() * forcing[k];
        let b = (-ik[k + 1]).exp() * forcing[k + 1];
        s += half * (a + b) * dt;
        out[k] = ik[k].exp() * (terminal + s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integral_of_linear_function_is_exact() {
        let grid = TimeGrid::new(1.0, 10);
        let f: Vec<f64> = grid.times().iter().map(|t| 3.0 * t + 1.0).collect();
        assert_relative_eq!(integral(&grid, &f), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn cumulative_matches_full_integral_at_zero() {
        let grid = TimeGrid::new(2.0, 64);
        let f: Vec<f64> = grid.times().iter().map(|&t: &f64| (0.3 * t).sin()).collect();
        let cum = cumulative_to_end(&grid, &f);
        assert_relative_eq!(cum[0], integral(&grid, &f), max_relative = 1e-13);
        assert_eq!(cum[grid.steps()], 0.0);
    }

    #[test]
    fn linear_terminal_ode_constant_coefficient() {
        // y' = -a y on [0, T] backward from y(T) = c has y(t) = c e^{a (T-t)}
        // when written as y(t) = c exp(int_t^T a).
        let grid = TimeGrid::new(1.0, 200);
        let k = vec![0.04f64; grid.len()];
        let g = vec![0.0f64; grid.len()];
        let y = linear_terminal_ode(&grid, &k, &g, 1.0);
        assert_relative_eq!(y[0], (0.04f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn linear_terminal_ode_with_forcing() {
        // Constant k = 0, forcing g = q: y(t) = y_T + q (T - t).
        let grid = TimeGrid::new(1.0, 50);
        let k = vec![0.0f64; grid.len()];
        let g = vec![0.7f64; grid.len()];
        let y = linear_terminal_ode(&grid, &k, &g, 2.0);
        assert_relative_eq!(y[0], 2.7, max_relative = 1e-13);
        assert_relative_eq!(y[25], 2.35, max_relative = 1e-13);
    }
}
