//! Quantile (check-loss) and least-squares estimators of the AR coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fsum::{fsum, Expansion};
use crate::processes::SeriesSample;

/// Iteration cap for the alternating intercept mode.
pub const ALTERNATING_MAX_ITER: usize = 20;
/// Objective-change stopping rule for the alternating intercept mode.
pub const ALTERNATING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QuantileTau(f64),
    Lse,
}

/// Intercept `F^{-1}(τ)` for the quantile criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantileIntercept {
    Known(f64),
    /// Alternate β-steps and q-steps (τ-quantile of residuals).
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub beta_hat: f64,
    pub method: Method,
    /// `a_n √n (β̂ − β)` for the quantile estimator, `n (β̂ − β)` for the LSE.
    pub scaled_error: f64,
    pub objective_at_min: f64,
    /// Closed interval of minimisers (degenerate unless the criterion is flat).
    pub minimizing_interval: Option<[f64; 2]>,
    /// Intercept used in the last β-step.
    pub q_tau: Option<f64>,
    pub iterations: usize,
}

/// Check loss `ρ_τ(u) = u (τ − I(u ≤ 0))`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// `Σ ρ_τ(y_i − β z_i)`, correctly rounded.
pub fn check_objective(y: &[f64], z: &[f64], tau: f64, beta: f64) -> f64 {
    fsum(y.iter().zip(z).map(|(&yi, &zi)| check_loss(yi - beta * zi, tau)))
}

/// Minimiser of a one-parameter check-loss criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckLossMin {
    pub beta: f64,
    pub interval: [f64; 2],
    pub objective: f64,
}

/// Exact minimiser of `β ↦ Σ ρ_τ(y_i − β z_i)`.
///
/// The criterion is convex and piecewise linear with kinks at `y_i / z_i`.
/// Its slope starts at `−Σ_{z>0} z τ − Σ_{z<0} |z| (1−τ)` and rises by `|z_i|`
/// at each kink; the minimiser is the first kink where the slope turns
/// nonnegative, or the midpoint of the flat piece when it is exactly zero.
/// Terms with `z_i = 0` do not depend on β and are skipped.
pub fn minimize_check_loss(y: &[f64], z: &[f64], tau: f64) -> Result<CheckLossMin> {
    if !(tau > 0.0 && tau < 1.0) {
        return domain(format!("tau must lie in (0, 1), got {tau}"));
    }
    if y.len() != z.len() {
        return domain("y and z must have the same length");
    }
    let mut kinks: Vec<(f64, f64)> = Vec::with_capacity(y.len());
    let mut slope = Expansion::new();
    let mut total = 0.0;
    for (&yi, &zi) in y.iter().zip(z) {
        if zi == 0.0 {
            continue;
        }
        let w = zi.abs();
        total += w;
        kinks.push((yi / zi, w));
        slope.add_product(-w, if zi > 0.0 { tau } else { 1.0 - tau });
    }
    if kinks.is_empty() {
        return Err(Error::Unidentified("all regressors are zero; the criterion is constant".into()));
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tol = 1e-12 * total;
    let mut i = 0;
    while i < kinks.len() {
        let b = kinks[i].0;
        while i < kinks.len() && kinks[i].0 == b {
            slope.add(kinks[i].1);
            i += 1;
        }
        let d = slope.value();
        if d >= -tol {
            let interval = if d <= tol && i < kinks.len() {
                [b, kinks[i].0]
            } else {
                [b, b]
            };
            let beta = 0.5 * (interval[0] + interval[1]);
            return Ok(CheckLossMin {
                beta,
                interval,
                objective: check_objective(y, z, tau, beta),
            });
        }
    }
    // the final slope is positive for τ in (0, 1), so this is unreachable
    Err(Error::Numerical("check-loss slope never turned nonnegative".into()))
}

/// Left and right derivatives of `β ↦ Σ ρ_τ(y_i − β z_i)` at `beta`.
/// Residuals within `1e-12` of zero (relative) count as exact kinks.
pub fn check_loss_subgradient(y: &[f64], z: &[f64], tau: f64, beta: f64) -> (f64, f64) {
    let mut left = 0.0;
    let mut right = 0.0;
    for (&yi, &zi) in y.iter().zip(z) {
        if zi == 0.0 {
            continue;
        }
        let u = yi - beta * zi;
        let at_kink = u.abs() <= 1e-12 * (yi.abs() + (beta * zi).abs()).max(f64::MIN_POSITIVE);
        let slope = |positive: bool| -zi * if positive { tau } else { tau - 1.0 };
        if at_kink {
            // moving β up decreases u when z > 0
            right += slope(zi < 0.0);
            left += slope(zi > 0.0);
        } else {
            let s = slope(u > 0.0);
            left += s;
            right += s;
        }
    }
    (left, right)
}

fn regression_pairs(series: &SeriesSample, q: f64) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = series.x[1..].iter().map(|x| x - q).collect();
    (y, series.x[..series.n()].to_vec())
}

/// τ-quantile estimate of β: `argmin_β Σ ρ_τ(X_i − β X_{i−1} − q_τ)`.
pub fn quantile_estimate(series: &SeriesSample, tau: f64, q_tau: QuantileIntercept) -> Result<EstimateResult> {
    let scale = series.a_n * (series.n() as f64).sqrt();
    let finish = |m: CheckLossMin, q: f64, iterations: usize| EstimateResult {
        beta_hat: m.beta,
        method: Method::QuantileTau(tau),
        scaled_error: scale * (m.beta - series.beta_true),
        objective_at_min: m.objective,
        minimizing_interval: Some(m.interval),
        q_tau: Some(q),
        iterations,
    };
    match q_tau {
        QuantileIntercept::Known(q) => {
            let (y, z) = regression_pairs(series, q);
            Ok(finish(minimize_check_loss(&y, &z, tau)?, q, 1))
        }
        QuantileIntercept::Estimate => {
            let ones = vec![1.0; series.n()];
            let diffs: Vec<f64> = series.x.windows(2).map(|w| w[1] - w[0]).collect();
            let mut q = minimize_check_loss(&diffs, &ones, tau)?.beta;
            let mut prev = f64::INFINITY;
            let mut best = None;
            for it in 1..=ALTERNATING_MAX_ITER {
                let (y, z) = regression_pairs(series, q);
                let m = minimize_check_loss(&y, &z, tau)?;
                let resid: Vec<f64> = series.x[1..]
                    .iter()
                    .zip(&series.x[..series.n()])
                    .map(|(xi, xp)| xi - m.beta * xp)
                    .collect();
                let qm = minimize_check_loss(&resid, &ones, tau)?;
                let obj = qm.objective;
                let done = (prev - obj).abs() < ALTERNATING_TOL;
                best = Some((m, q, it));
                q = qm.beta;
                prev = obj;
                if done {
                    break;
                }
            }
            let (m, q, it) = best.expect("at least one iteration");
            Ok(finish(m, q, it))
        }
    }
}

/// Least squares: `β̂ = Σ X_{i−1} X_i / Σ X_{i−1}²`, scaled error `n (β̂ − β)`.
pub fn lse_estimate(series: &SeriesSample) -> Result<EstimateResult> {
    let n = series.n();
    let prev = &series.x[..n];
    let next = &series.x[1..];
    let mut num = Expansion::new();
    let mut den = Expansion::new();
    for (&p, &x) in prev.iter().zip(next) {
        num.add_product(p, x);
        den.add_product(p, p);
    }
    let den = den.value();
    if !(den > 0.0) {
        return Err(Error::Unidentified("sum of squared regressors is zero".into()));
    }
    let beta_hat = num.value() / den;
    let objective = fsum(prev.iter().zip(next).map(|(&p, &x)| {
        let r = x - beta_hat * p;
        r * r
    }));
    Ok(EstimateResult {
        beta_hat,
        method: Method::Lse,
        scaled_error: n as f64 * (beta_hat - series.beta_true),
        objective_at_min: objective,
        minimizing_interval: None,
        q_tau: None,
        iterations: 1,
    })
}

/// Both sides of the unit-root least-squares identity
/// `n(β̂−1) · n⁻¹ Σ X_{i−1}²/a_n² = ½ (X_n² − X_0² − Σ ε_i²)/a_n²`,
/// plus the size `½ (X_n² + X_0² + Σ ε_i²)/a_n²` of the terms on the right.
pub fn lse_identity_sides(series: &SeriesSample) -> Result<(f64, f64, f64)> {
    let est = lse_estimate(series)?;
    let n = series.n();
    let a2 = series.a_n * series.a_n;
    let sxx = fsum(series.x[..n].iter().map(|x| x * x));
    let lhs = n as f64 * (est.beta_hat - 1.0) * (sxx / a2) / n as f64;
    let xn = series.x[n];
    let x0 = series.x[0];
    let see = fsum(series.eps.iter().map(|e| e * e));
    let rhs = 0.5 * fsum([xn * xn, -x0 * x0, -see]) / a2;
    let size = 0.5 * (xn * xn + x0 * x0 + see) / a2;
    Ok((lhs, rhs, size))
}
