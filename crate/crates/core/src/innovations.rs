//! Innovation generators for the three model families (i.i.d. stable,
//! GARCH(1,1), linear moving average) and their normalising constants `a_n`.
//!
//! All samplers are pure functions of `(spec, n, stream)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{domain, Error, Result};
use crate::rng::{tags, NoiseStream};

/// Default number of Monte Carlo draws behind the Kesten-index bisection.
pub const KESTEN_DRAWS: usize = 1_000_000;
/// Bisection tolerance on the Kesten index.
pub const KESTEN_TOL: f64 = 1e-3;
/// Moving averages with at most this many lags are convolved directly.
pub const DIRECT_CONVOLUTION_MAX_LAGS: usize = 64;
/// Lower bound on the default moving-average truncation.
pub const MIN_DEFAULT_TRUNCATION: usize = 1000;

const LOG_MOMENT_DRAWS: usize = 100_000;
const PARAMETER_STREAM_SEED: u64 = 0x4B45_5354_454E_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StableIid,
    Garch11,
    LinearMa,
}

/// Slowly varying factor `l(j)` in the moving-average coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// `l(j) = 1`.
    #[default]
    Constant,
    /// `l(j) = log(1 + j)`.
    Log,
}

impl SlowlyVarying {
    pub fn eval(self, j: f64) -> f64 {
        match self {
            SlowlyVarying::Constant => 1.0,
            SlowlyVarying::Log => (1.0 + j).ln(),
        }
    }
}

/// Law of the i.i.d. driving noise `η_i` (GARCH and moving-average families).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseNoise {
    #[default]
    Normal,
    /// Unscaled Student-t with `df` degrees of freedom.
    StudentT { df: f64 },
    /// Rademacher: ±1 with probability ½ each.
    TwoPoint,
}

impl BaseNoise {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            BaseNoise::Normal => StandardNormal.sample(rng),
            BaseNoise::StudentT { df } => StudentT::new(df)
                .expect("df validated positive")
                .sample(rng),
            BaseNoise::TwoPoint => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            BaseNoise::Normal | BaseNoise::TwoPoint => 1.0,
            BaseNoise::StudentT { df } if df > 2.0 => df / (df - 2.0),
            BaseNoise::StudentT { .. } => f64::INFINITY,
        }
    }

    /// Regular-variation index of `|η|`; infinite for light tails.
    pub fn tail_index(&self) -> f64 {
        match *self {
            BaseNoise::StudentT { df } => df,
            _ => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BaseNoise::StudentT { df } if !(df > 0.0 && df.is_finite()) => {
                domain(format!("noise.student_t.df must be positive, got {df}"))
            }
            _ => Ok(()),
        }
    }
}

fn default_omega() -> f64 {
    0.1
}
fn default_theta() -> f64 {
    0.7
}
fn default_burn_in() -> usize {
    1000
}

/// Tagged description of one innovation model with every parameter it needs.
/// Fields irrelevant to the selected family are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationSpec {
    pub family: Family,
    /// Stable index for `StableIid`; for `Garch11` an optional precomputed
    /// Kesten index (derived numerically when absent).
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub skew: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub slowly_varying: SlowlyVarying,
    /// Moving-average truncation `M`; `None` means `max(n, 1000)`.
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub noise: BaseNoise,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl InnovationSpec {
    pub fn stable(alpha: f64, skew: f64) -> Self {
        Self {
            alpha: Some(alpha),
            skew,
            ..Self::base(Family::StableIid)
        }
    }

    pub fn garch(omega: f64, a: f64, b: f64) -> Self {
        Self {
            omega,
            a,
            b,
            ..Self::base(Family::Garch11)
        }
    }

    pub fn linear_ma(theta: f64) -> Self {
        Self {
            theta,
            ..Self::base(Family::LinearMa)
        }
    }

    fn base(family: Family) -> Self {
        Self {
            family,
            alpha: None,
            skew: 0.0,
            omega: default_omega(),
            a: 0.0,
            b: 0.0,
            theta: default_theta(),
            slowly_varying: SlowlyVarying::Constant,
            truncation: None,
            noise: BaseNoise::Normal,
            burn_in: default_burn_in(),
        }
    }

    pub fn with_noise(mut self, noise: BaseNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_truncation(mut self, m: usize) -> Self {
        self.truncation = Some(m);
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_slowly_varying(mut self, l: SlowlyVarying) -> Self {
        self.slowly_varying = l;
        self
    }

    /// Checks the invariants of the selected family. Messages name the
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.truncation == Some(0) {
            return domain("truncation must be at least 1");
        }
        match self.family {
            Family::StableIid => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::Domain("alpha is required for stable_iid".into()))?;
                check_stable(alpha, self.skew)
            }
            Family::Garch11 => {
                if !(self.omega > 0.0) {
                    return domain(format!("omega must be > 0, got {}", self.omega));
                }
                if !(self.a >= 0.0) || !(self.b >= 0.0) {
                    return domain(format!("a and b must be >= 0, got a={} b={}", self.a, self.b));
                }
                match self.alpha {
                    Some(al) if !(al > 0.0) => domain(format!("alpha must be > 0, got {al}")),
                    _ => Ok(()),
                }
            }
            Family::LinearMa => {
                if !(self.theta > 0.5) {
                    return domain(format!("theta must be > 1/2, got {}", self.theta));
                }
                Ok(())
            }
        }
    }

    /// Long memory means a linear moving average with `θ < 1`.
    pub fn is_long_memory(&self) -> bool {
        self.family == Family::LinearMa && self.theta < 1.0
    }

    /// Truncation used for a sample of length `n`.
    pub fn effective_truncation(&self, n: usize) -> usize {
        self.truncation
            .unwrap_or_else(|| n.max(MIN_DEFAULT_TRUNCATION))
    }

    /// Tail index of the innovations: the stable index, the (possibly
    /// computed) Kesten index, or the noise tail index for moving averages.
    pub fn tail_index(&self) -> f64 {
        match self.family {
            Family::StableIid => self.alpha.unwrap_or(2.0),
            Family::Garch11 => self.alpha.unwrap_or_else(|| {
                cached_kesten(self).unwrap_or(f64::INFINITY)
            }),
            Family::LinearMa => self.noise.tail_index(),
        }
    }

    /// Innovations have finite variance.
    pub fn finite_variance(&self) -> bool {
        match self.family {
            Family::StableIid => self.alpha.map_or(false, |a| a >= 2.0),
            Family::Garch11 => self.tail_index() > 2.0 && self.noise.variance().is_finite(),
            Family::LinearMa => self.noise.variance().is_finite(),
        }
    }

    /// Draws `n` innovations.
    pub fn sample(&self, n: usize, stream: &NoiseStream) -> Result<InnovationDraw> {
        self.validate()?;
        match self.family {
            Family::StableIid => Ok(InnovationDraw {
                eps: sample_stable_iid(self.alpha.unwrap_or(2.0), self.skew, n, stream)?,
                truncation_tail_mass: None,
                warnings: Vec::new(),
            }),
            Family::Garch11 => {
                let g = sample_garch(self, n, stream)?;
                let warnings = if g.stationary {
                    Vec::new()
                } else {
                    vec![format!(
                        "GARCH parameters look nonstationary: E log(a + b eta^2) = {:.4} >= 0",
                        g.log_moment
                    )]
                };
                Ok(InnovationDraw {
                    eps: g.eps,
                    truncation_tail_mass: None,
                    warnings,
                })
            }
            Family::LinearMa => {
                let m = sample_linear_ma(self, n, stream)?;
                Ok(InnovationDraw {
                    eps: m.eps,
                    truncation_tail_mass: Some(m.tail_mass),
                    warnings: Vec::new(),
                })
            }
        }
    }
}

fn parameter_stream(spec: &InnovationSpec) -> NoiseStream {
    // depends only on the noise law so every replicate agrees on the index
    NoiseStream::new(PARAMETER_STREAM_SEED, 0).fork(match spec.noise {
        BaseNoise::Normal => 0,
        BaseNoise::StudentT { df } => df.to_bits(),
        BaseNoise::TwoPoint => 1,
    })
}

/// Output of [`InnovationSpec::sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationDraw {
    pub eps: Vec<f64>,
    /// ℓ² mass `Σ_{j>M} c_j²` of the coefficients the truncation drops.
    pub truncation_tail_mass: Option<f64>,
    pub warnings: Vec<String>,
}

fn check_stable(alpha: f64, skew: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (0, 2], got {alpha}"));
    }
    if !(-1.0..=1.0).contains(&skew) {
        return domain(format!("skew must lie in [-1, 1], got {skew}"));
    }
    Ok(())
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One standard stable variate `S_α(1, skew, 0)` by the Chambers–Mallows–Stuck
/// transform. At `α = 2` this is `N(0, 2)`.
pub fn stable_variate<R: Rng + ?Sized>(alpha: f64, skew: f64, rng: &mut R) -> f64 {
    let v = PI * (open_unit(rng) - 0.5);
    let w: f64 = Exp1.sample(rng);
    if (alpha - 1.0).abs() < 1e-12 {
        let pb = FRAC_PI_2 + skew * v;
        (2.0 / PI) * (pb * v.tan() - skew * ((FRAC_PI_2 * w * v.cos()) / pb).ln())
    } else {
        let t = skew * (PI * alpha / 2.0).tan();
        let shift = t.atan() / alpha;
        let scale = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
        let av = alpha * (v + shift);
        scale * av.sin() / v.cos().powf(1.0 / alpha)
            * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

/// `n` i.i.d. standard stable draws.
pub fn sample_stable_iid(alpha: f64, skew: f64, n: usize, stream: &NoiseStream) -> Result<Vec<f64>> {
    check_stable(alpha, skew)?;
    if n == 0 {
        return domain("n must be at least 1");
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| stable_variate(alpha, skew, &mut rng)).collect())
}

/// GARCH draw plus the stationarity diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchDraw {
    pub eps: Vec<f64>,
    /// Monte Carlo estimate of `E log(a + b η²)`.
    pub log_moment: f64,
    pub stationary: bool,
}

/// GARCH(1,1): `ε_i = σ_i η_i`, `σ_i² = ω + a σ_{i-1}² + b ε_{i-1}²`.
///
/// `σ_0²` starts at `ω / (1 − a − b)` when `a + b < 1` and at `ω` otherwise;
/// the first `burn_in` values are discarded. Nonstationary parameters only
/// raise the `stationary = false` flag.
pub fn sample_garch(spec: &InnovationSpec, n: usize, stream: &NoiseStream) -> Result<GarchDraw> {
    let (omega, a, b) = (spec.omega, spec.a, spec.b);
    if !(omega > 0.0) {
        return domain(format!("omega must be > 0, got {omega}"));
    }
    if !(a >= 0.0 && b >= 0.0) {
        return domain(format!("a and b must be >= 0, got a={a} b={b}"));
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    spec.noise.validate()?;
    let log_moment = garch_log_moment(a, b, &spec.noise, LOG_MOMENT_DRAWS, &parameter_stream(spec).fork(tags::GARCH_LOG_MOMENT));

    let mut rng = stream.rng();
    let mut sigma2 = if a + b < 1.0 { omega / (1.0 - a - b) } else { omega };
    let total = spec.burn_in + n;
    let mut eps = Vec::with_capacity(n);
    let mut prev = sigma2.sqrt() * spec.noise.draw(&mut rng);
    if spec.burn_in == 0 {
        eps.push(prev);
    }
    for i in 1..total {
        sigma2 = omega + a * sigma2 + b * prev * prev;
        prev = sigma2.sqrt() * spec.noise.draw(&mut rng);
        if i >= spec.burn_in {
            eps.push(prev);
        }
    }
    Ok(GarchDraw {
        eps,
        log_moment,
        stationary: log_moment < 0.0,
    })
}

/// Monte Carlo estimate of `E log(a + b η²)`.
pub fn garch_log_moment(a: f64, b: f64, noise: &BaseNoise, draws: usize, stream: &NoiseStream) -> f64 {
    let mut rng = stream.rng();
    let mut acc = 0.0;
    for _ in 0..draws {
        let e = noise.draw(&mut rng);
        acc += (a + b * e * e).ln();
    }
    acc / draws as f64
}

/// Kesten index: the positive root of `E (a + b η²)^{α/2} = 1`, found by
/// bisection on a Monte Carlo expectation. `None` when no finite root exists
/// (nonstationary parameters, or bounded multipliers).
pub fn kesten_index(a: f64, b: f64, noise: &BaseNoise, draws: usize, stream: &NoiseStream) -> Option<f64> {
    let mut rng = stream.fork(tags::KESTEN).rng();
    let logs: Vec<f64> = (0..draws)
        .map(|_| {
            let e = noise.draw(&mut rng);
            (a + b * e * e).ln()
        })
        .collect();
    let mean_log = logs.iter().sum::<f64>() / draws as f64;
    if !(mean_log < 0.0) {
        return None;
    }
    let h = |alpha: f64| logs.iter().map(|&l| (0.5 * alpha * l).exp()).sum::<f64>() / draws as f64 - 1.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while h(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 512.0 {
            return None;
        }
    }
    while hi - lo > KESTEN_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Same spec with the Kesten index stored, so later calls skip the bisection.
pub fn with_kesten_index(spec: &InnovationSpec) -> InnovationSpec {
    let mut s = spec.clone();
    if s.family == Family::Garch11 && s.alpha.is_none() {
        s.alpha = Some(spec.tail_index());
    }
    s
}

/// Moving-average coefficients `c_j = j^{-θ} l(j)`, `j = 1..=m` (index 0 holds `c_1`).
pub fn ma_coefficients(theta: f64, l: SlowlyVarying, m: usize) -> Vec<f64> {
    (1..=m)
        .map(|j| {
            let j = j as f64;
            j.powf(-theta) * l.eval(j)
        })
        .collect()
}

/// `Σ_{j>m} c_j²`: explicit sum over the next block of lags, then the
/// integral of the smooth tail in log coordinates.
pub fn ma_tail_mass(theta: f64, l: SlowlyVarying, m: usize) -> f64 {
    const EXPLICIT: usize = 10_000;
    let c2 = |x: f64| {
        let c = x.powf(-theta) * l.eval(x);
        c * c
    };
    let explicit: f64 = ((m + 1)..=(m + EXPLICIT)).map(|j| c2(j as f64)).sum();
    // ∫_{x0}^∞ c(x)² dx with x = x0 e^u, Simpson on u ∈ [0, U]
    let x0 = (m + EXPLICIT) as f64 + 0.5;
    let decay = 2.0 * theta - 1.0;
    let upper = 60.0 / decay;
    let steps = 4000;
    let h = upper / steps as f64;
    let f = |u: f64| {
        let x = x0 * u.exp();
        c2(x) * x
    };
    let mut s = f(0.0) + f(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    explicit + s * h / 3.0
}

/// Moving-average draw plus truncation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MaDraw {
    pub eps: Vec<f64>,
    pub truncation: usize,
    pub tail_mass: f64,
}

/// `ε_i = Σ_{j=1}^{M} c_j η_{i−j}` with `c_j = j^{-θ} l(j)`.
pub fn sample_linear_ma(spec: &InnovationSpec, n: usize, stream: &NoiseStream) -> Result<MaDraw> {
    if !(spec.theta > 0.5) {
        return domain(format!("theta must be > 1/2, got {}", spec.theta));
    }
    spec.noise.validate()?;
    let m = spec.effective_truncation(n);
    if m == 0 {
        return domain("truncation must be at least 1");
    }
    let eps = if m <= DIRECT_CONVOLUTION_MAX_LAGS || n == 0 {
        let coeffs = ma_coefficients(spec.theta, spec.slowly_varying, m);
        sample_linear_ma_with_coefficients(&coeffs, &spec.noise, n, stream)?
    } else {
        let mut rng = stream.rng();
        let eta: Vec<f64> = (0..n + m).map(|_| spec.noise.draw(&mut rng)).collect();
        cached_kernel(spec.theta, spec.slowly_varying, m, n).apply(&eta)
    };
    Ok(MaDraw {
        eps,
        truncation: m,
        tail_mass: ma_tail_mass(spec.theta, spec.slowly_varying, m),
    })
}

/// Moving average with explicit coefficients `coeffs[j-1] = c_j`. Draws the
/// `n + M` base variates `η_{1−M}, …, η_n` in time order.
pub fn sample_linear_ma_with_coefficients(
    coeffs: &[f64],
    noise: &BaseNoise,
    n: usize,
    stream: &NoiseStream,
) -> Result<Vec<f64>> {
    if coeffs.is_empty() {
        return domain("at least one coefficient is required");
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    let mut rng = stream.rng();
    let eta: Vec<f64> = (0..n + coeffs.len()).map(|_| noise.draw(&mut rng)).collect();
    Ok(if coeffs.len() <= DIRECT_CONVOLUTION_MAX_LAGS {
        ma_convolve_direct(coeffs, &eta, n)
    } else {
        ma_convolve_fft(coeffs, &eta, n)
    })
}

/// `eta[t + M − 1] = η_t` for `t = 1−M ..= n`; returns `ε_1..ε_n`.
pub fn ma_convolve_direct(coeffs: &[f64], eta: &[f64], n: usize) -> Vec<f64> {
    let m = coeffs.len();
    (1..=n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(jm1, c)| c * eta[i + m - 2 - jm1])
                .sum()
        })
        .collect()
}

/// FFT version of [`ma_convolve_direct`].
pub fn ma_convolve_fft(coeffs: &[f64], eta: &[f64], n: usize) -> Vec<f64> {
    MaKernel::new(coeffs, n).apply(eta)
}

/// Spectrum of the coefficient kernel for one `(coefficients, n)` pair, so
/// repeated draws only pay for two transforms.
pub struct MaKernel {
    m: usize,
    n: usize,
    spectrum: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl MaKernel {
    pub fn new(coeffs: &[f64], n: usize) -> Self {
        let m = coeffs.len();
        // outputs m.. of a circular convolution of length ≥ n + m do not wrap
        let size = (n + m).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (j, &c) in coeffs.iter().enumerate() {
            spectrum[j + 1].re = c;
        }
        fwd.process(&mut spectrum);
        Self { m, n, spectrum, fwd, inv }
    }

    /// `eta` holds the `n + M` base variates.
    pub fn apply(&self, eta: &[f64]) -> Vec<f64> {
        let size = self.spectrum.len();
        let mut signal = vec![Complex64::new(0.0, 0.0); size];
        for (s, &e) in signal.iter_mut().zip(eta) {
            s.re = e;
        }
        self.fwd.process(&mut signal);
        for (s, k) in signal.iter_mut().zip(&self.spectrum) {
            *s *= k;
        }
        self.inv.process(&mut signal);
        let scale = 1.0 / size as f64;
        (0..self.n).map(|i| signal[i + self.m].re * scale).collect()
    }
}

fn cached_kernel(theta: f64, l: SlowlyVarying, m: usize, n: usize) -> Arc<MaKernel> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, SlowlyVarying, usize, usize), Arc<MaKernel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (theta.to_bits(), l, m, n);
    if let Some(k) = cache.lock().expect("cache poisoned").get(&key) {
        return k.clone();
    }
    let k = Arc::new(MaKernel::new(&ma_coefficients(theta, l, m), n));
    let mut guard = cache.lock().expect("cache poisoned");
    if guard.len() > 16 {
        guard.clear();
    }
    guard.insert(key, k.clone());
    k
}

fn cached_kesten(spec: &InnovationSpec) -> Option<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64, u64, u64), Option<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let noise_key = match spec.noise {
        BaseNoise::Normal => (0, 0),
        BaseNoise::StudentT { df } => (1, df.to_bits()),
        BaseNoise::TwoPoint => (2, 0),
    };
    let key = (spec.a.to_bits(), spec.b.to_bits(), noise_key.0, noise_key.1);
    if let Some(v) = cache.lock().expect("cache poisoned").get(&key) {
        return *v;
    }
    let v = kesten_index(spec.a, spec.b, &spec.noise, KESTEN_DRAWS, &parameter_stream(spec));
    cache.lock().expect("cache poisoned").insert(key, v);
    v
}

/// `√(n log n)`, with `log n` floored at 1 so tiny `n` stays positive.
fn sqrt_n_log_n(n: f64) -> f64 {
    (n * n.ln().max(1.0)).sqrt()
}

fn heavy_tail_scale(alpha: f64, n: f64) -> f64 {
    if alpha < 2.0 - KESTEN_TOL {
        n.powf(1.0 / alpha)
    } else if alpha <= 2.0 + KESTEN_TOL {
        sqrt_n_log_n(n)
    } else {
        n.sqrt()
    }
}

/// Leading-order normalising constant `a_n` for the family, up to a
/// constant or slowly varying factor:
///
/// * `StableIid`: `n^{1/α}` for `α < 2`; `√n` at `α = 2` (the law is Gaussian).
/// * `Garch11` with Kesten index `α`: `n^{1/α}`, `√(n log n)` at `α = 2`, `√n` above.
/// * `LinearMa`, `θ < 1`: `n^{3/2−θ} l(n)`; otherwise by the tail of `η`
///   as for GARCH (so `√n` for finite-variance noise).
pub fn normalizer_a_n(spec: &InnovationSpec, n: usize) -> f64 {
    let nf = n.max(1) as f64;
    match spec.family {
        Family::StableIid => {
            let alpha = spec.alpha.unwrap_or(2.0);
            if alpha < 2.0 {
                nf.powf(1.0 / alpha)
            } else {
                nf.sqrt()
            }
        }
        Family::Garch11 => heavy_tail_scale(spec.tail_index(), nf),
        Family::LinearMa => {
            if spec.theta < 1.0 {
                nf.powf(1.5 - spec.theta) * spec.slowly_varying.eval(nf)
            } else {
                heavy_tail_scale(spec.noise.tail_index(), nf)
            }
        }
    }
}

/// Hill estimator of the tail index from the `k` largest `|x|`.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= samples.len() {
        return domain(format!("hill: need 0 < k < n, got k={k} n={}", samples.len()));
    }
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let threshold = abs[k].ln();
    let mean = abs[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    Ok(1.0 / mean)
}

/// Infinite-variance moving average `c_j = j^{-θ}`: the θ-threshold under
/// which the short-memory limit theory applies (`θ > 3/α`, relaxed to
/// `θ > 2/α` when `α < 1`).
pub fn heavy_ma_theta_admissible(theta: f64, alpha: f64) -> bool {
    if alpha < 1.0 {
        theta > 2.0 / alpha
    } else {
        theta > 3.0 / alpha
    }
}

/// Which limit regime a finite-variance moving average `c_j = j^{-θ} l(j)` falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaRegime {
    /// `1/2 < θ < 1`: fractional Brownian limit, `a_n = n^{3/2−θ} l(n)`.
    LongMemory,
    /// `θ = 1`: boundary case, outside both regimes.
    Boundary,
    /// `1 < θ ≤ 3/2`: pointwise marked-process limit.
    ShortMemoryPointwise,
    /// `θ > 3/2`: uniform-in-x limit (sup statistics).
    ShortMemoryUniform,
}

pub fn finite_variance_ma_regime(theta: f64) -> MaRegime {
    if theta < 1.0 {
        MaRegime::LongMemory
    } else if theta == 1.0 {
        MaRegime::Boundary
    } else if theta <= 1.5 {
        MaRegime::ShortMemoryPointwise
    } else {
        MaRegime::ShortMemoryUniform
    }
}
