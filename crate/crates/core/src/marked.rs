//! Marked empirical processes `α_n(x) = Σ g(X_{i−1}/a_n)(I(ε_i ≤ x) − F(x))`,
//! their residual versions and sup functionals on a grid of marks.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::distributions::RefDist;
use crate::error::{domain, Error, Result};
use crate::fsum::{fsum, Expansion};
use crate::processes::SeriesSample;

/// Weight `g` applied to the scaled lagged level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFunction {
    /// `g(u) = u`.
    Identity,
    /// `g(u) = u / (1 + u²)`.
    BoundedSmooth,
    /// `g ≡ 1`.
    #[default]
    One,
    Constant(f64),
    /// Linear interpolation through `(knots, values)`, constant outside.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

impl WeightFunction {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            WeightFunction::Identity => u,
            WeightFunction::BoundedSmooth => u / (1.0 + u * u),
            WeightFunction::One => 1.0,
            WeightFunction::Constant(c) => *c,
            WeightFunction::Table { knots, values } => {
                let j = knots.partition_point(|&k| k <= u);
                if j == 0 {
                    values[0]
                } else if j == knots.len() {
                    values[j - 1]
                } else {
                    let w = (u - knots[j - 1]) / (knots[j] - knots[j - 1]);
                    values[j - 1] + w * (values[j] - values[j - 1])
                }
            }
        }
    }

    /// Lipschitz constant on the real line (so Hölder with exponent 1).
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            WeightFunction::Identity | WeightFunction::BoundedSmooth => 1.0,
            WeightFunction::One | WeightFunction::Constant(_) => 0.0,
            WeightFunction::Table { knots, values } => knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Tables need strictly ascending finite knots with finite values, which
    /// makes the interpolant Lipschitz.
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::Constant(c) if !c.is_finite() => domain("g_id.constant must be finite"),
            WeightFunction::Table { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return domain("g_id.table needs equally many knots and values (at least one)");
                }
                if knots.iter().chain(values).any(|v| !v.is_finite()) {
                    return domain("g_id.table entries must be finite");
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return domain("g_id.table knots must be strictly ascending");
                }
                if !self.lipschitz_constant().is_finite() {
                    return domain("g_id.table is not Hölder continuous");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            WeightFunction::Constant(c) => *c == 0.0,
            WeightFunction::Table { values, .. } => values.iter().all(|v| *v == 0.0),
            _ => false,
        }
    }

    /// `c · g`.
    pub fn scaled(&self, c: f64) -> WeightFunction {
        match self {
            WeightFunction::One => WeightFunction::Constant(c),
            WeightFunction::Constant(v) => WeightFunction::Constant(c * v),
            WeightFunction::Table { knots, values } => WeightFunction::Table {
                knots: knots.clone(),
                values: values.iter().map(|v| c * v).collect(),
            },
            other => {
                let knots: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
                let values = knots.iter().map(|&u| c * other.eval(u)).collect();
                WeightFunction::Table { knots, values }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    TrueInnovations,
    Residual,
    ResidualRecentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    SqrtN,
    AN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupMode {
    /// `max_x value(x)`.
    #[default]
    Signed,
    /// `max_x |value(x)|`.
    Abs,
}

/// `x ↦ α_n(x)/norm` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedCurve {
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub norm: f64,
    pub norm_kind: NormKind,
    pub kind: CurveKind,
    pub g_id: WeightFunction,
    pub f_id: String,
    /// Bound `B` with `sup_grid ≤ sup_ℝ ≤ sup_grid + 2B` for the signed sup.
    pub outside_grid_bound: f64,
}

impl MarkedCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.x_grid.iter().zip(&self.values) {
            writeln!(w, "{:.16e},{:.16e}", x, v)?;
        }
        Ok(())
    }
}

/// `size` evenly spaced marks on `[−a, a]`.
pub fn evenly_spaced_grid(a: f64, size: usize) -> Result<Vec<f64>> {
    if !(a > 0.0) || size < 2 {
        return domain(format!("grid needs A > 0 and at least 2 points, got A={a} size={size}"));
    }
    Ok((0..size)
        .map(|i| -a + 2.0 * a * i as f64 / (size - 1) as f64)
        .collect())
}

pub(crate) fn check_grid(x_grid: &[f64]) -> Result<()> {
    if x_grid.is_empty() {
        return Err(Error::GridMismatch("mark grid is empty".into()));
    }
    if x_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::GridMismatch("mark grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Sort order of `values`, ascending.
pub fn sort_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// `Σ_i w_i (I(e_i ≤ x) − F(x))` for every grid point, each correctly rounded.
///
/// One pass over the innovations in sorted order: the weight mass below `x`
/// is kept as an exact expansion, and `F(x)·Σw` is formed exactly from the
/// partials of the total weight.
pub fn weighted_sweep(e: &[f64], order: &[usize], w: &[f64], fvals: &[f64], x_grid: &[f64]) -> Vec<f64> {
    let mut total = Expansion::new();
    for &wi in w {
        total.add(wi);
    }
    let mut below = Expansion::new();
    let mut pos = 0;
    let mut out = Vec::with_capacity(x_grid.len());
    for (&x, &f) in x_grid.iter().zip(fvals) {
        while pos < order.len() && e[order[pos]] <= x {
            below.add(w[order[pos]]);
            pos += 1;
        }
        let mut acc = below.clone();
        for &p in total.partials() {
            acc.add_product(-f, p);
        }
        out.push(acc.value());
    }
    out
}

fn weights(series: &SeriesSample, g: &WeightFunction) -> Vec<f64> {
    series.x[..series.n()]
        .iter()
        .map(|x| g.eval(x / series.a_n))
        .collect()
}

fn norm_for(series: &SeriesSample) -> (f64, NormKind) {
    if series.is_long_memory() {
        (series.a_n, NormKind::AN)
    } else {
        ((series.n() as f64).sqrt(), NormKind::SqrtN)
    }
}

fn outside_bound(e: &[f64], w: &[f64], dist: &RefDist, x_grid: &[f64], norm: f64) -> f64 {
    let lo = x_grid[0];
    let hi = x_grid[x_grid.len() - 1];
    let abs_total = fsum(w.iter().map(|v| v.abs()));
    let outside = fsum(e.iter().zip(w).filter(|(ei, _)| **ei < lo || **ei > hi).map(|(_, wi)| wi.abs()));
    let tail = dist.cdf(lo).max(1.0 - dist.cdf(hi));
    (outside + tail * abs_total) / norm
}

fn curve_from(
    e: &[f64],
    w: &[f64],
    dist: &RefDist,
    x_grid: &[f64],
    norm: (f64, NormKind),
    kind: CurveKind,
    g: &WeightFunction,
) -> Result<MarkedCurve> {
    check_grid(x_grid)?;
    let fvals: Vec<f64> = x_grid.iter().map(|&x| dist.cdf(x)).collect();
    let order = sort_order(e);
    let sums = weighted_sweep(e, &order, w, &fvals, x_grid);
    Ok(MarkedCurve {
        x_grid: x_grid.to_vec(),
        values: sums.iter().map(|s| s / norm.0).collect(),
        norm: norm.0,
        norm_kind: norm.1,
        kind,
        g_id: g.clone(),
        f_id: dist.label(),
        outside_grid_bound: outside_bound(e, w, dist, x_grid, norm.0),
    })
}

/// `α_n(x)/norm` with the true innovations; `norm` is `a_n` under long
/// memory and `√n` otherwise.
pub fn marked_empirical(series: &SeriesSample, g: &WeightFunction, dist: &RefDist, x_grid: &[f64]) -> Result<MarkedCurve> {
    let w = weights(series, g);
    curve_from(&series.eps, &w, dist, x_grid, norm_for(series), CurveKind::TrueInnovations, g)
}

/// Residuals `ε̂_i = X_i − β̂ X_{i−1}`.
pub fn residuals(series: &SeriesSample, beta_hat: f64) -> Vec<f64> {
    series.x[1..]
        .iter()
        .zip(&series.x[..series.n()])
        .map(|(xi, xp)| xi - beta_hat * xp)
        .collect()
}

/// `α̂_n(x)/norm`: the marked process built from residuals.
pub fn residual_marked_empirical(
    series: &SeriesSample,
    beta_hat: f64,
    g: &WeightFunction,
    dist: &RefDist,
    x_grid: &[f64],
) -> Result<MarkedCurve> {
    let w = weights(series, g);
    let e = residuals(series, beta_hat);
    curve_from(&e, &w, dist, x_grid, norm_for(series), CurveKind::Residual, g)
}

/// `[α̂_n(x) − f(x)(β̂ − β) Σ g(X_{i−1}/a_n) X_{i−1}] / a_n`.
pub fn recentered_residual_statistic(
    series: &SeriesSample,
    beta_hat: f64,
    g: &WeightFunction,
    dist: &RefDist,
    density: impl Fn(f64) -> f64,
    x_grid: &[f64],
) -> Result<MarkedCurve> {
    let w = weights(series, g);
    let e = residuals(series, beta_hat);
    let mut c = curve_from(&e, &w, dist, x_grid, (series.a_n, NormKind::AN), CurveKind::ResidualRecentered, g)?;
    let mut mass = Expansion::new();
    for (wi, xp) in w.iter().zip(&series.x[..series.n()]) {
        mass.add_product(*wi, *xp);
    }
    let shift = (beta_hat - series.beta_true) * mass.value();
    for (v, &x) in c.values.iter_mut().zip(x_grid) {
        *v -= density(x) * shift / series.a_n;
    }
    Ok(c)
}

/// `sup_x |α̂_n(x) − α_n(x) − Σ g(X_{i−1}/a_n)(F(x + (β̂−β)X_{i−1}) − F(x))| / √n`.
pub fn decomposition_remainder(
    series: &SeriesSample,
    beta_hat: f64,
    g: &WeightFunction,
    dist: &RefDist,
    x_grid: &[f64],
) -> Result<f64> {
    check_grid(x_grid)?;
    let w = weights(series, g);
    let fvals: Vec<f64> = x_grid.iter().map(|&x| dist.cdf(x)).collect();
    let e = residuals(series, beta_hat);
    let a_hat = weighted_sweep(&e, &sort_order(&e), &w, &fvals, x_grid);
    let a = weighted_sweep(&series.eps, &sort_order(&series.eps), &w, &fvals, x_grid);
    let d = beta_hat - series.beta_true;
    let lags = &series.x[..series.n()];
    let sqrt_n = (series.n() as f64).sqrt();
    let mut worst = 0.0f64;
    for (m, &x) in x_grid.iter().enumerate() {
        let drift = fsum(w.iter().zip(lags).map(|(wi, xp)| wi * (dist.cdf(x + d * xp) - fvals[m])));
        worst = worst.max((a_hat[m] - a[m] - drift).abs());
    }
    Ok(worst / sqrt_n)
}

pub fn sup_of(values: &[f64], mode: SupMode) -> f64 {
    match mode {
        SupMode::Signed => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        SupMode::Abs => values.iter().map(|v| v.abs()).fold(0.0, f64::max),
    }
}

pub fn sup_functional(curve: &MarkedCurve, mode: SupMode) -> Result<f64> {
    if curve.values.is_empty() {
        return domain("sup of an empty curve");
    }
    Ok(sup_of(&curve.values, mode))
}
