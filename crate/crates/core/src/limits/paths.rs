//! Stable Lévy paths on the grid `t_j = j/k`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::innovations::stable_variate;
use crate::rng::NoiseStream;

/// Smallest admissible number of time steps.
pub const MIN_STEPS: usize = 16;

/// Path values at `t_j = j/k`, `j = 0..=k`, with `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub k: usize,
    pub values: Vec<f64>,
}

impl PathGrid {
    /// Cumulative sums of `increments`, starting from 0.
    pub fn from_increments(increments: &[f64]) -> PathGrid {
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for d in increments {
            acc += d;
            values.push(acc);
        }
        PathGrid { k: increments.len(), values }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.k).map(|j| j as f64 / self.k as f64).collect()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.k]
    }

    /// Every `factor`-th point: the same path on the grid with `k/factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<PathGrid> {
        if factor == 0 || self.k % factor != 0 {
            return domain(format!("cannot coarsen k={} by {factor}", self.k));
        }
        Ok(PathGrid {
            k: self.k / factor,
            values: self.values.iter().step_by(factor).copied().collect(),
        })
    }

    pub fn scaled(mut self, c: f64) -> PathGrid {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }
}

pub(crate) fn check_steps(k: usize) -> Result<()> {
    if k < MIN_STEPS {
        return domain(format!("need at least {MIN_STEPS} time steps, got {k}"));
    }
    Ok(())
}

/// `S(t_j) = k^{−1/α} Σ_{i≤j} ζ_i` with `ζ_i` standard stable. With `unit`
/// the `α = 2` path is rescaled to standard Brownian motion (the raw one has
/// variance-2 increments); `unit` has no effect for `α < 2`.
pub fn simulate_stable_path(alpha: f64, skew: f64, k: usize, stream: &NoiseStream, unit: bool) -> Result<PathGrid> {
    Ok(simulate_stable_path_with_squares(alpha, skew, k, stream, unit)?.0)
}

/// The path together with `Σ_j (ΔS_j)²` from the same increments.
pub fn simulate_stable_path_with_squares(
    alpha: f64,
    skew: f64,
    k: usize,
    stream: &NoiseStream,
    unit: bool,
) -> Result<(PathGrid, f64)> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (0, 2], got {alpha}"));
    }
    if !(-1.0..=1.0).contains(&skew) {
        return domain(format!("skew must lie in [-1, 1], got {skew}"));
    }
    check_steps(k)?;
    let mut scale = (k as f64).powf(-1.0 / alpha);
    if unit && alpha == 2.0 {
        scale /= 2f64.sqrt();
    }
    let mut rng = stream.rng();
    let inc: Vec<f64> = (0..k).map(|_| scale * stable_variate(alpha, skew, &mut rng)).collect();
    let squares = inc.iter().map(|d| d * d).sum();
    Ok((PathGrid::from_increments(&inc), squares))
}
