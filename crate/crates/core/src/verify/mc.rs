//! Change-of-measure Monte Carlo cross-check.
//!
//! Simulates the pair `(X, zeta)` under the reference measure with exact
//! lognormal transitions per grid cell (no Euler bias): log-increments are
//! Gaussian with drift and loadings read from the trapezoid cell averages of
//! the piecewise coefficients, and the two processes share the same driver.
//! `E[zeta_T] = 1` holds exactly cell by cell, making the weight estimate a
//! pure sanity check on the sampler; the weighted moments are compared to
//! the closed forms through `E*[X_T] = E[zeta_T X_T]`.
//!
//! Randomness contract: path `i` draws from stream `i` of a counter-based
//! generator seeded once, so estimates are bitwise reproducible and path `i`
//! does not depend on the total path count. Accumulation is in path order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelSpec, TimeGrid};
use crate::mv::terminal_stats;
use crate::real::Real;
use crate::solution::Policy;

/// One estimated moment with its target and normalized deviation.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub target: f64,
    pub z: f64,
}

impl Estimate {
    fn new(sum: f64, sum_sq: f64, n: usize, target: f64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        let std_error = (var / nf).sqrt();
        let z = if std_error > 0.0 {
            (mean - target) / std_error
        } else if mean == target {
            0.0
        } else {
            f64::INFINITY * (mean - target).signum()
        };
        Estimate {
            value: mean,
            std_error,
            target,
            z,
        }
    }
}

/// Monte Carlo report: weighted-moment estimates with z-scores against the
/// closed-form targets.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub paths: usize,
    pub seed: u64,
    /// `E[zeta_T]` against 1 (martingale property of the density).
    pub weight: Estimate,
    /// `E[zeta_T X_T]` against the closed-form worst-case mean.
    pub weighted_mean: Estimate,
    /// `E[zeta_T X_T^2]` against the closed-form worst-case second moment.
    pub weighted_second_moment: Estimate,
}

impl McReport {
    pub fn max_abs_z(&self) -> f64 {
        self.weight
            .z
            .abs()
            .max(self.weighted_mean.z.abs())
            .max(self.weighted_second_moment.z.abs())
    }
}

#[derive(Debug, Clone, Error)]
pub enum McError {
    #[error("at least 100 paths are required, got {n}")]
    TooFewPaths { n: usize },
}

/// Run the cross-check with `n_paths` exact-lognormal paths.
pub fn mc_cross_check<R>(
    policy: &Policy<R>,
    spec: &ModelSpec<R>,
    grid: &TimeGrid<R>,
    n_paths: usize,
    seed: u64,
) -> Result<McReport, McError>
where
    R: Real,
    StandardNormal: Distribution<R>,
{
    if n_paths < 100 {
        return Err(McError::TooFewPaths { n: n_paths });
    }
    let sampled = spec.sample(grid).expect("grid within horizon");
    let d = spec.dim;
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let half = R::of(0.5);

    // Per-cell Gaussian parameters for log X and log zeta.
    let mut drift_x = vec![R::zero(); steps];
    let mut drift_z = vec![R::zero(); steps];
    let mut load_x = vec![R::zero(); steps * d];
    let mut load_z = vec![R::zero(); steps * d];
    for k in 0..steps {
        let mut growth = half * (sampled.rate[k] + sampled.rate[k + 1]);
        let mut x2 = R::zero();
        let mut z2 = R::zero();
        for j in 0..d {
            let alpha = half * (policy.nodes[k].alpha[j] + policy.nodes[k + 1].alpha[j]);
            let h = half * (policy.nodes[k].distortion[j] + policy.nodes[k + 1].distortion[j]);
            let b = half * (sampled.sharpe[j][k] + sampled.sharpe[j][k + 1]);
            let c = half * (sampled.state_vol[j][k] + sampled.state_vol[j][k + 1]);
            let dv = half * (sampled.ctrl_vol[j][k] + sampled.ctrl_vol[j][k + 1]);
            let sigma = c + dv * alpha;
            growth += b * alpha;
            x2 += sigma * sigma;
            z2 += h * h;
            load_x[k * d + j] = sigma * sqrt_dt;
            load_z[k * d + j] = h * sqrt_dt;
        }
        drift_x[k] = (growth - half * x2) * dt;
        drift_z[k] = -half * z2 * dt;
    }

    let (mean_target, var_target) = terminal_stats(policy, spec, grid);
    let x2_target = var_target + mean_target * mean_target;

    let base = ChaCha8Rng::seed_from_u64(seed);
    let x0 = spec.x0;
    let mut s_w = 0.0f64;
    let mut s_w2 = 0.0f64;
    let mut s_wx = 0.0f64;
    let mut s_wx2 = 0.0f64;
    let mut s_wxx = 0.0f64;
    let mut s_wxx2 = 0.0f64;
    for path in 0..n_paths {
        let mut rng = base.clone();
        rng.set_stream(path as u64);
        let mut lx = R::zero();
        let mut lz = R::zero();
        for k in 0..steps {
            lx += drift_x[k];
            lz += drift_z[k];
            for j in 0..d {
                let z: R = StandardNormal.sample(&mut rng);
                lx += load_x[k * d + j] * z;
                lz += load_z[k * d + j] * z;
            }
        }
        let x = (x0 * lx.exp()).as_f64();
        let w = lz.exp().as_f64();
        s_w += w;
        s_w2 += w * w;
        s_wx += w * x;
        s_wx2 += (w * x) * (w * x);
        s_wxx += w * x * x;
        s_wxx2 += (w * x * x) * (w * x * x);
    }

    Ok(McReport {
        paths: n_paths,
        seed,
        weight: Estimate::new(s_w, s_w2, n_paths, 1.0),
        weighted_mean: Estimate::new(s_wx, s_wx2, n_paths, mean_target.as_f64()),
        weighted_second_moment: Estimate::new(s_wxx, s_wxx2, n_paths, x2_target.as_f64()),
    })
}
