//! Replication studies: finite-`n` statistics against draws of their limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::distributions::{FId, RefDist};
use crate::error::{domain, Error, Result};
use crate::estimators::{lse_estimate, quantile_estimate, QuantileIntercept};
use crate::innovations::InnovationSpec;
use crate::limits::{CovModel, LimitEnsemble, LimitKind, LimitParams, LimitSampler};
use crate::marked::{
    evenly_spaced_grid, marked_empirical, recentered_residual_statistic, residual_marked_empirical, sup_functional,
    SupMode, WeightFunction,
};
use crate::processes::{simulate_series, SeriesSample};
use crate::rng::NoiseStream;

/// Levels reported for every empirical distribution.
pub const REPORT_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `sup_x α_n(x)/norm`.
    MarkedSup,
    /// `sup_x α̂_n(x)/norm` with the configured estimator.
    ResidualSup,
    /// `a_n √n (β̂ − β)` for the quantile estimator.
    QuantileScaledError,
    /// `n (β̂ − β)` for the LSE.
    LseScaledError,
    /// `sup_x` of the recentered residual statistic (long memory).
    LongMemoryRecentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Lse,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    /// `q_τ` given, or `F^{−1}(τ)` of the reference law.
    #[default]
    Known,
    Estimate,
}

fn default_tau() -> f64 {
    0.5
}
fn default_a() -> f64 {
    3.0
}
fn default_grid_size() -> usize {
    241
}
fn default_k() -> usize {
    crate::limits::ensemble::DEFAULT_STEPS
}
fn default_beta() -> f64 {
    1.0
}
fn default_block() -> usize {
    crate::limits::ensemble::DEFAULT_PRELIMIT_BLOCK
}
fn default_long_run_n() -> usize {
    1 << 16
}
fn default_series_count() -> usize {
    1
}

/// One study. Field names are the JSON keys; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: InnovationSpec,
    pub n_list: Vec<usize>,
    #[serde(rename = "R")]
    pub replications: usize,
    pub statistic: Statistic,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub q_tau: Option<f64>,
    #[serde(default)]
    pub intercept: InterceptMode,
    #[serde(default)]
    pub g_id: WeightFunction,
    #[serde(default, rename = "F_id")]
    pub f_id: FId,
    #[serde(default = "default_a", rename = "A")]
    pub a: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub cov_model: CovModel,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub sup_mode: SupMode,
    #[serde(default)]
    pub negate_integral: bool,
    #[serde(default)]
    pub wasserstein: bool,
    #[serde(default = "default_block")]
    pub prelimit_block: usize,
    #[serde(default = "default_long_run_n")]
    pub long_run_n: usize,
    /// Series written per sample size by `simulate`.
    #[serde(default = "default_series_count")]
    pub series_count: usize,
}

impl ExperimentConfig {
    pub fn new(spec: InnovationSpec, n_list: Vec<usize>, replications: usize, statistic: Statistic) -> Self {
        Self {
            spec,
            n_list,
            replications,
            statistic,
            estimator: EstimatorKind::Lse,
            tau: default_tau(),
            q_tau: None,
            intercept: InterceptMode::Known,
            g_id: WeightFunction::One,
            f_id: FId::Auto,
            a: default_a(),
            grid_size: default_grid_size(),
            k: default_k(),
            cov_model: CovModel::PlugInIid,
            base_seed: 0,
            beta: default_beta(),
            x0: 0.0,
            sup_mode: SupMode::Signed,
            negate_integral: false,
            wasserstein: false,
            prelimit_block: default_block(),
            long_run_n: default_long_run_n(),
            series_count: default_series_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.g_id.validate()?;
        if self.n_list.is_empty() {
            return domain("n_list must not be empty");
        }
        if self.n_list.contains(&0) {
            return domain("n_list entries must be positive");
        }
        if self.n_list.windows(2).any(|w| w[1] < w[0]) {
            return domain("n_list must be ascending");
        }
        if self.replications < MIN_REPLICATIONS {
            return domain(format!("R must be at least {MIN_REPLICATIONS}, got {}", self.replications));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return domain(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.series_count == 0 {
            return domain("series_count must be positive");
        }
        evenly_spaced_grid(self.a, self.grid_size)?;
        Ok(())
    }

    pub fn x_grid(&self) -> Result<Vec<f64>> {
        evenly_spaced_grid(self.a, self.grid_size)
    }

    /// Stream for replicate `r` at sample-size index `m`.
    pub fn replicate_stream(&self, m: usize, r: usize) -> NoiseStream {
        NoiseStream::new(self.base_seed, (m * self.replications + r) as u64)
    }

    /// First stream id of the limit ensemble.
    pub fn limit_stream(&self) -> NoiseStream {
        NoiseStream::new(self.base_seed, (self.n_list.len() * self.replications) as u64)
    }

    pub fn reference_law(&self, n: usize) -> Result<RefDist> {
        RefDist::resolve(self.f_id, &self.spec, n)
    }

    /// Limit functional matching the configured statistic.
    pub fn limit_kind(&self) -> Result<LimitKind> {
        let long = self.spec.is_long_memory();
        Ok(match self.statistic {
            Statistic::MarkedSup if long => LimitKind::LongMemoryRecentered,
            Statistic::MarkedSup => LimitKind::MarkedSup,
            Statistic::ResidualSup if long => {
                return domain("residual_sup is not covered under long memory; use long_memory_recentered")
            }
            Statistic::ResidualSup => match self.estimator {
                EstimatorKind::Quantile => LimitKind::QuantileResidualSup,
                EstimatorKind::Lse if self.spec.finite_variance() => LimitKind::LseResidualSup,
                EstimatorKind::Lse => LimitKind::LseResidualSupHeavy,
            },
            Statistic::QuantileScaledError => LimitKind::QuantileError,
            Statistic::LseScaledError => LimitKind::LseError,
            Statistic::LongMemoryRecentered => LimitKind::LongMemoryRecentered,
        })
    }

    pub fn limit_params(&self, dist: RefDist) -> Result<LimitParams> {
        let mut p = LimitParams::new(self.limit_kind()?, self.spec.clone(), self.g_id.clone(), dist)
            .with_grid(self.x_grid()?)
            .with_steps(self.k)
            .with_tau(self.tau)
            .with_cov_model(self.cov_model);
        p.sup_mode = self.sup_mode;
        p.negate_integral = self.negate_integral;
        p.prelimit_block = self.prelimit_block;
        p.long_run_n = self.long_run_n;
        Ok(p)
    }

    fn intercept(&self, dist: &RefDist) -> QuantileIntercept {
        match self.intercept {
            InterceptMode::Estimate => QuantileIntercept::Estimate,
            InterceptMode::Known => QuantileIntercept::Known(self.q_tau.unwrap_or_else(|| dist.quantile(self.tau))),
        }
    }

    fn beta_hat(&self, series: &SeriesSample, dist: &RefDist) -> Result<f64> {
        Ok(match self.estimator {
            EstimatorKind::Lse => lse_estimate(series)?.beta_hat,
            EstimatorKind::Quantile => quantile_estimate(series, self.tau, self.intercept(dist))?.beta_hat,
        })
    }

    /// The finite-`n` statistic of one series.
    pub fn statistic_of(&self, series: &SeriesSample, dist: &RefDist) -> Result<f64> {
        let grid = self.x_grid()?;
        match self.statistic {
            Statistic::MarkedSup => sup_functional(&marked_empirical(series, &self.g_id, dist, &grid)?, self.sup_mode),
            Statistic::ResidualSup => {
                if self.g_id.is_zero() {
                    return Ok(0.0);
                }
                let b = self.beta_hat(series, dist)?;
                let mut v = sup_functional(&residual_marked_empirical(series, b, &self.g_id, dist, &grid)?, self.sup_mode)?;
                if self.limit_kind()? == LimitKind::LseResidualSupHeavy {
                    v *= (series.n() as f64).sqrt() / series.a_n;
                }
                Ok(v)
            }
            Statistic::QuantileScaledError => Ok(quantile_estimate(series, self.tau, self.intercept(dist))?.scaled_error),
            Statistic::LseScaledError => Ok(lse_estimate(series)?.scaled_error),
            Statistic::LongMemoryRecentered => {
                let b = lse_estimate(series)?.beta_hat;
                let density = |x: f64| dist.pdf(x).unwrap_or(0.0);
                let c = recentered_residual_statistic(series, b, &self.g_id, dist, density, &grid)?;
                sup_functional(&c, self.sup_mode)
            }
        }
    }
}

/// `k`-th order statistic with `k = ⌈qR⌉` (clamped to `1..=R`).
pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return domain("empirical_quantile of an empty sample");
    }
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("quantile level must lie in (0, 1), got {q}"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_of_sorted(&s, q))
}

fn quantile_of_sorted(sorted: &[f64], q: f64) -> f64 {
    let r = sorted.len() as f64;
    // the small shift keeps ⌈0.95·100⌉ = 95 despite rounding in the product
    let k = (q * r - 1e-9 * r).ceil().clamp(1.0, r) as usize;
    sorted[k - 1]
}

/// `sup_x |F̂_a(x) − F̂_b(x)|`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return domain("two_sample_ks needs two nonempty samples");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `∫ |F̂_a − F̂_b| dx`.
pub fn wasserstein(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return domain("wasserstein needs two nonempty samples");
    }
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb) = (0.0, 0.0);
    let mut total = 0.0;
    for w in 0..pooled.len() {
        if pooled[w].1 {
            ca += 1.0;
        } else {
            cb += 1.0;
        }
        if w + 1 < pooled.len() {
            total += (ca / na - cb / nb).abs() * (pooled[w + 1].0 - pooled[w].0);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub value: f64,
}

fn quantile_rows(samples: &[f64]) -> Vec<QuantileRow> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    REPORT_LEVELS
        .iter()
        .map(|&level| QuantileRow {
            level,
            value: quantile_of_sorted(&s, level),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub n: usize,
    pub r_effective: usize,
    pub dropped: usize,
    pub quantiles: Vec<QuantileRow>,
    pub ks: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wasserstein: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub kind: LimitKind,
    pub quantiles: Vec<QuantileRow>,
    pub k: usize,
    pub cov_model: CovModel,
    pub path_source: crate::limits::PathSource,
    pub rejections: usize,
    pub draws: usize,
    pub draws_attempted: usize,
    /// Ensembles drawn for this report; always 1, shared by every `n`.
    pub ensembles_computed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub statistic: Statistic,
    pub base_seed: u64,
    pub replications: usize,
    pub rows: Vec<SampleSizeRow>,
    pub limit: LimitSummary,
    /// Kept out of serialized output so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

/// Everything a study produces, including raw draws.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ComparisonReport,
    /// Finite-`n` draws per sample size (dropped replicates removed).
    pub finite: Vec<Vec<f64>>,
    pub ensemble: LimitEnsemble,
}

/// `R` draws of the finite-`n` statistic at sample-size index `m`; returns
/// the kept draws and the number dropped as unidentified.
pub fn finite_sample_draws(config: &ExperimentConfig, m: usize, dist: &RefDist) -> Result<(Vec<f64>, usize)> {
    let n = config.n_list[m];
    let out = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let s = simulate_series(&config.spec, n, config.beta, config.x0, &config.replicate_stream(m, r))?;
            match config.statistic_of(&s, dist) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Unidentified(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let dropped = out.iter().filter(|v| v.is_none()).count();
    Ok((out.into_iter().flatten().collect(), dropped))
}

/// The limit ensemble of `config` (`R` draws).
pub fn limit_ensemble(config: &ExperimentConfig) -> Result<LimitEnsemble> {
    config.validate()?;
    let n_max = *config.n_list.last().expect("validated");
    let params = config.limit_params(config.reference_law(n_max)?)?;
    let stream = config.limit_stream();
    LimitSampler::new(params, &stream)?.ensemble(config.replications, &stream)
}

pub fn run_experiment_full(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = Instant::now();
    config.validate()?;
    let ensemble = limit_ensemble(config)?;
    let mut rows = Vec::with_capacity(config.n_list.len());
    let mut finite = Vec::with_capacity(config.n_list.len());
    for (m, &n) in config.n_list.iter().enumerate() {
        let dist = config.reference_law(n)?;
        let (draws, dropped) = finite_sample_draws(config, m, &dist)?;
        let ks = if draws.is_empty() { 1.0 } else { two_sample_ks(&draws, &ensemble.draws)? };
        let w = if config.wasserstein && !draws.is_empty() {
            Some(wasserstein(&draws, &ensemble.draws)?)
        } else {
            None
        };
        log::info!("n = {n}: KS = {ks:.4}, dropped = {dropped}");
        rows.push(SampleSizeRow {
            n,
            r_effective: draws.len(),
            dropped,
            quantiles: quantile_rows(&draws),
            ks,
            wasserstein: w,
        });
        finite.push(draws);
    }
    let report = ComparisonReport {
        statistic: config.statistic,
        base_seed: config.base_seed,
        replications: config.replications,
        rows,
        limit: LimitSummary {
            kind: ensemble.kind,
            quantiles: quantile_rows(&ensemble.draws),
            k: ensemble.k,
            cov_model: ensemble.cov_model,
            path_source: ensemble.path_source,
            rejections: ensemble.rejections,
            draws: ensemble.draws.len(),
            draws_attempted: ensemble.draws_attempted,
            ensembles_computed: 1,
        },
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutput { report, finite, ensemble })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    Ok(run_experiment_full(config)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// KS decreased over each of the last two steps of `n_list`.
    pub monotone_trend: bool,
    pub report: ComparisonReport,
}

pub fn convergence_study(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    if config.n_list.len() < 3 {
        return domain(format!("convergence_study needs at least 3 sample sizes, got {}", config.n_list.len()));
    }
    let report = run_experiment(config)?;
    let rows: Vec<ConvergenceRow> = report.rows.iter().map(|r| ConvergenceRow { n: r.n, ks: r.ks }).collect();
    let l = rows.len();
    let monotone_trend = rows[l - 1].ks < rows[l - 2].ks && rows[l - 2].ks < rows[l - 3].ks;
    Ok(ConvergenceTable {
        rows,
        monotone_trend,
        report,
    })
}
