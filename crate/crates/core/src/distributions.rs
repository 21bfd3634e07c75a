//! Reference marginal laws `F` (and densities `f`) of the innovations.
//!
//! Closed forms where they exist; otherwise a Monte Carlo table with linear
//! interpolation between quantile knots and Pareto tails beyond them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::gamma;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{domain, Result};
use crate::innovations::{
    ma_coefficients, sample_linear_ma_with_coefficients, stable_variate, BaseNoise, Family, InnovationSpec,
};
use crate::rng::{tags, NoiseStream};

/// Draws behind a Monte Carlo reference table.
pub const TABLE_DRAWS: usize = 10_000_000;
/// Quantile knots in a Monte Carlo reference table.
pub const TABLE_KNOTS: usize = 2049;

const TABLE_SEED: u64 = 0x5245_4644_4953_5401;
const TABLE_CHUNKS: usize = 64;
const DENSITY_SPAN: usize = 4;
const GARCH_MIXTURE_PATH: usize = 200_000;
const GARCH_MIXTURE_COMPONENTS: usize = 1000;
const GARCH_GRID: usize = 4001;
const MA_TABLE_DRAWS: usize = 1 << 20;

/// Piecewise-linear CDF/density table on ascending knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
    /// Pareto index used beyond the outermost knots; `None` clamps to 0/1.
    pub tail_index: Option<f64>,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&k| k <= x);
    if j == 0 {
        return ys[0];
    }
    if j == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

impl Table {
    /// Quantile table from a sorted sample: knots at `p_j = (j+1)/(m+1)`,
    /// densities from the slope across `±4` knots.
    pub fn from_sorted_sample(sorted: &[f64], knots: usize, tail_index: Option<f64>) -> Table {
        let n = sorted.len();
        let mut xs = Vec::with_capacity(knots);
        let mut cdf = Vec::with_capacity(knots);
        for j in 0..knots {
            let p = (j + 1) as f64 / (knots + 1) as f64;
            let idx = ((p * n as f64) as usize).min(n - 1);
            let x = sorted[idx];
            if let Some(&last) = xs.last() {
                if x <= last {
                    continue;
                }
            }
            xs.push(x);
            cdf.push(p);
        }
        let m = xs.len();
        let pdf = (0..m)
            .map(|j| {
                let lo = j.saturating_sub(DENSITY_SPAN);
                let hi = (j + DENSITY_SPAN).min(m - 1);
                (cdf[hi] - cdf[lo]) / (xs[hi] - xs[lo])
            })
            .collect();
        Table { xs, cdf, pdf, tail_index }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (first, last) = (self.xs[0], self.xs[self.xs.len() - 1]);
        if x < first {
            return match self.tail_index {
                Some(a) if first < 0.0 => self.cdf[0] * (first / x).powf(a),
                _ => 0.0,
            };
        }
        if x > last {
            let top = self.cdf[self.cdf.len() - 1];
            return match self.tail_index {
                Some(a) if last > 0.0 => 1.0 - (1.0 - top) * (last / x).powf(a),
                _ => 1.0,
            };
        }
        interp(&self.xs, &self.cdf, x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (first, last) = (self.xs[0], self.xs[self.xs.len() - 1]);
        if x < first {
            return match self.tail_index {
                Some(a) if first < 0.0 => self.pdf[0] * (first / x).powf(a + 1.0),
                _ => 0.0,
            };
        }
        if x > last {
            return match self.tail_index {
                Some(a) if last > 0.0 => self.pdf[self.pdf.len() - 1] * (last / x).powf(a + 1.0),
                _ => 0.0,
            };
        }
        interp(&self.xs, &self.pdf, x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (first, last) = (self.cdf[0], self.cdf[self.cdf.len() - 1]);
        if p < first {
            if let Some(a) = self.tail_index {
                if self.xs[0] < 0.0 {
                    return self.xs[0] * (first / p).powf(1.0 / a);
                }
            }
            return self.xs[0];
        }
        if p > last {
            if let Some(a) = self.tail_index {
                let xl = self.xs[self.xs.len() - 1];
                if xl > 0.0 {
                    return xl * ((1.0 - last) / (1.0 - p)).powf(1.0 / a);
                }
            }
            return self.xs[self.xs.len() - 1];
        }
        interp(&self.cdf, &self.xs, p)
    }
}

/// Reference CDF chosen in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FId {
    /// Derived from the innovation spec.
    #[default]
    Auto,
    /// Standard normal.
    Normal,
    StudentT { df: f64 },
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefDist {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64, scale: f64 },
    /// ±1 with probability ½; has no density.
    TwoPoint,
    Tabulated(Arc<Table>),
    /// Stable law from a Monte Carlo table; the symmetric density at 0 is
    /// exact (`Γ(1 + 1/α)/π`).
    Stable { alpha: f64, skew: f64, table: Arc<Table> },
}

/// Density at 0 of the symmetric standard stable law, `Γ(1+1/α)/π`.
pub fn symmetric_stable_density_at_zero(alpha: f64) -> f64 {
    gamma(1.0 + 1.0 / alpha) / std::f64::consts::PI
}

impl RefDist {
    pub fn standard_normal() -> Self {
        RefDist::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            RefDist::Normal { mean, sd } => Normal::new(*mean, *sd).expect("sd > 0").cdf(x),
            RefDist::StudentT { df, scale } => StudentsT::new(0.0, *scale, *df).expect("df > 0").cdf(x),
            RefDist::TwoPoint => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            RefDist::Tabulated(t) => t.cdf(x),
            RefDist::Stable { table, .. } => table.cdf(x),
        }
    }

    /// Density, or `None` for laws without one.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            RefDist::Normal { mean, sd } => Some(Normal::new(*mean, *sd).expect("sd > 0").pdf(x)),
            RefDist::StudentT { df, scale } => Some(StudentsT::new(0.0, *scale, *df).expect("df > 0").pdf(x)),
            RefDist::TwoPoint => None,
            RefDist::Tabulated(t) => Some(t.pdf(x)),
            RefDist::Stable { alpha, skew, table } => {
                if *skew == 0.0 && x == 0.0 {
                    Some(symmetric_stable_density_at_zero(*alpha))
                } else {
                    Some(table.pdf(x))
                }
            }
        }
    }

    /// Left-continuous inverse `inf{x : F(x) ≥ p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            RefDist::Normal { mean, sd } => Normal::new(*mean, *sd).expect("sd > 0").inverse_cdf(p),
            RefDist::StudentT { df, scale } => StudentsT::new(0.0, *scale, *df).expect("df > 0").inverse_cdf(p),
            RefDist::TwoPoint => {
                if p <= 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            RefDist::Tabulated(t) => t.quantile(p),
            RefDist::Stable { skew, table, .. } => {
                if *skew == 0.0 && p == 0.5 {
                    0.0
                } else {
                    table.quantile(p)
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            RefDist::Normal { mean, sd } => format!("normal(mean={mean},sd={sd})"),
            RefDist::StudentT { df, scale } => format!("student_t(df={df},scale={scale})"),
            RefDist::TwoPoint => "two_point".into(),
            RefDist::Tabulated(t) => format!("table(knots={})", t.xs.len()),
            RefDist::Stable { alpha, skew, .. } => format!("stable_table(alpha={alpha},skew={skew})"),
        }
    }

    /// Resolves a configured reference law; `Auto` defers to [`RefDist::for_spec`].
    pub fn resolve(id: FId, spec: &InnovationSpec, n: usize) -> Result<RefDist> {
        match id {
            FId::Auto => RefDist::for_spec(spec, n),
            FId::Normal => Ok(RefDist::standard_normal()),
            FId::StudentT { df } => {
                if !(df > 0.0) {
                    return domain(format!("F_id.student_t.df must be positive, got {df}"));
                }
                Ok(RefDist::StudentT { df, scale: 1.0 })
            }
            FId::TwoPoint => Ok(RefDist::TwoPoint),
        }
    }

    /// Marginal law of the innovations of `spec` at sample size `n`:
    ///
    /// * stable: `N(0, 2)` at `α = 2`, otherwise a cached Monte Carlo table;
    /// * GARCH: scale mixture `F(x) = E F_η(x/σ)` over stationary volatilities;
    /// * moving average: `N(0, Σ_{j≤M} c_j²)` for Gaussian noise, otherwise a
    ///   Monte Carlo table.
    pub fn for_spec(spec: &InnovationSpec, n: usize) -> Result<RefDist> {
        spec.validate()?;
        match spec.family {
            Family::StableIid => {
                let alpha = spec.alpha.unwrap_or(2.0);
                if alpha == 2.0 {
                    return Ok(RefDist::Normal { mean: 0.0, sd: 2f64.sqrt() });
                }
                Ok(RefDist::Stable {
                    alpha,
                    skew: spec.skew,
                    table: stable_table(alpha, spec.skew),
                })
            }
            Family::Garch11 => garch_mixture(spec),
            Family::LinearMa => {
                let m = spec.effective_truncation(n);
                let coeffs = ma_coefficients(spec.theta, spec.slowly_varying, m);
                match spec.noise {
                    BaseNoise::Normal => Ok(RefDist::Normal {
                        mean: 0.0,
                        sd: crate::fsum::fsum(coeffs.iter().map(|c| c * c)).sqrt(),
                    }),
                    noise => {
                        let chunk = MA_TABLE_DRAWS / TABLE_CHUNKS;
                        let base = NoiseStream::new(TABLE_SEED, 0).fork(tags::REF_TABLE);
                        let mut draws: Vec<f64> = (0..TABLE_CHUNKS as u64)
                            .into_par_iter()
                            .map(|c| {
                                let s = NoiseStream::new(base.seed, c);
                                sample_linear_ma_with_coefficients(&coeffs, &noise, chunk, &s)
                            })
                            .collect::<Result<Vec<_>>>()?
                            .concat();
                        draws.par_sort_unstable_by(f64::total_cmp);
                        let t = noise.tail_index();
                        Ok(RefDist::Tabulated(Arc::new(Table::from_sorted_sample(
                            &draws,
                            TABLE_KNOTS,
                            t.is_finite().then_some(t),
                        ))))
                    }
                }
            }
        }
    }
}

fn noise_law(noise: &BaseNoise) -> Result<RefDist> {
    match *noise {
        BaseNoise::Normal => Ok(RefDist::standard_normal()),
        BaseNoise::StudentT { df } => Ok(RefDist::StudentT { df, scale: 1.0 }),
        BaseNoise::TwoPoint => domain("two-point GARCH noise has no continuous reference law"),
    }
}

fn garch_mixture(spec: &InnovationSpec) -> Result<RefDist> {
    let eta = noise_law(&spec.noise)?;
    let (omega, a, b) = (spec.omega, spec.a, spec.b);
    if a == 0.0 && b == 0.0 {
        return Ok(match eta {
            RefDist::Normal { .. } => RefDist::Normal { mean: 0.0, sd: omega.sqrt() },
            RefDist::StudentT { df, .. } => RefDist::StudentT { df, scale: omega.sqrt() },
            other => other,
        });
    }
    let mut rng = NoiseStream::new(TABLE_SEED, 1).fork(tags::REF_TABLE).rng();
    let mut sigma2 = if a + b < 1.0 { omega / (1.0 - a - b) } else { omega };
    let mut sig: Vec<f64> = Vec::with_capacity(GARCH_MIXTURE_PATH);
    for i in 0..(spec.burn_in + GARCH_MIXTURE_PATH) {
        let e = sigma2.sqrt() * spec.noise.draw(&mut rng);
        if i >= spec.burn_in {
            sig.push(sigma2.sqrt());
        }
        sigma2 = omega + a * sigma2 + b * e * e;
    }
    sig.sort_by(f64::total_cmp);
    let comps: Vec<f64> = (0..GARCH_MIXTURE_COMPONENTS)
        .map(|c| sig[((c as f64 + 0.5) / GARCH_MIXTURE_COMPONENTS as f64 * sig.len() as f64) as usize])
        .collect();
    let reach = 8.0 * comps[comps.len() - 1];
    let xs: Vec<f64> = (0..GARCH_GRID)
        .map(|i| -reach + 2.0 * reach * i as f64 / (GARCH_GRID - 1) as f64)
        .collect();
    let m = comps.len() as f64;
    let (cdf, pdf): (Vec<f64>, Vec<f64>) = xs
        .par_iter()
        .map(|&x| {
            let mut f = 0.0;
            let mut d = 0.0;
            for &s in &comps {
                f += eta.cdf(x / s);
                d += eta.pdf(x / s).unwrap_or(0.0) / s;
            }
            (f / m, d / m)
        })
        .unzip();
    let tail = spec.tail_index();
    Ok(RefDist::Tabulated(Arc::new(Table {
        xs,
        cdf,
        pdf,
        tail_index: tail.is_finite().then_some(tail),
    })))
}

/// Monte Carlo table of the standard stable law, built once per process.
pub fn stable_table(alpha: f64, skew: f64) -> Arc<Table> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<Table>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (alpha.to_bits(), skew.to_bits());
    if let Some(t) = cache.lock().expect("cache poisoned").get(&key) {
        return t.clone();
    }
    let base = NoiseStream::new(TABLE_SEED, 2).fork(tags::REF_TABLE);
    let chunk = TABLE_DRAWS / TABLE_CHUNKS;
    let mut draws: Vec<f64> = (0..TABLE_CHUNKS as u64)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = NoiseStream::new(base.seed, c).rng();
            (0..chunk).map(move |_| stable_variate(alpha, skew, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    draws.par_sort_unstable_by(f64::total_cmp);
    let t = Arc::new(Table::from_sorted_sample(&draws, TABLE_KNOTS, Some(alpha)));
    cache.lock().expect("cache poisoned").insert(key, t.clone());
    t
}
