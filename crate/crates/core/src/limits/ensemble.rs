//! Monte Carlo ensembles of the limit functionals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::fbm::{long_memory_variance_constant, FbmSampler};
use super::field::{CovModel, MarkFactor};
use super::integrals::{forward_integral, integral_g_times_path, integral_of_square, quantile_error_from_parts, DEGENERATE_TOL};
use super::paths::{check_steps, simulate_stable_path_with_squares, PathGrid};
use crate::distributions::RefDist;
use crate::error::{domain, Error, Result};
use crate::innovations::{normalizer_a_n, Family, InnovationSpec};
use crate::marked::{check_grid, evenly_spaced_grid, sort_order, sup_of, SupMode, WeightFunction};
use crate::rng::{tags, NoiseStream};

/// Default number of time steps.
pub const DEFAULT_STEPS: usize = 1 << 12;
/// Innovations per time step in a pre-limit path.
pub const DEFAULT_PRELIMIT_BLOCK: usize = 4;
/// Resampling attempts for one draw before giving up.
pub const MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// `sup_x ∫ g(S(t−)) dW(t, x)`.
    MarkedSup,
    /// `sup_x [f(x) Q ∫ g(S)S dt + ∫ g(S(t−)) dW(t, x)]`, `Q` the quantile-error limit.
    QuantileResidualSup,
    /// `sup_x [f(x) L ∫ g(S)S dt + ∫ g(S(t−)) dW(t, x)]`, `L` the LSE-error limit (`a_n = √n`).
    LseResidualSup,
    /// `sup_x f(x) L ∫ g(S)S dt` (`a_n` grows faster than `√n`).
    LseResidualSupHeavy,
    /// `sup_x f(x) ∫ g(Z_θ) dZ_θ`.
    LongMemoryRecentered,
    /// `−∫ S dW(·, q) / (f(q) ∫ S² dt)`, `q = F^{−1}(τ)`.
    QuantileError,
    /// `½(S(1)² − s²) / ∫ S² dt`.
    LseError,
}

impl LimitKind {
    fn needs_field(self) -> bool {
        matches!(
            self,
            LimitKind::MarkedSup | LimitKind::QuantileResidualSup | LimitKind::LseResidualSup | LimitKind::QuantileError
        )
    }

    fn needs_quantile_mark(self) -> bool {
        matches!(self, LimitKind::QuantileResidualSup | LimitKind::QuantileError)
    }

    fn is_scalar(self) -> bool {
        matches!(self, LimitKind::QuantileError | LimitKind::LseError)
    }
}

/// How `S` (and `W`) are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    /// `S`, `W` and `s²` from one long innovation sequence (block sums), so
    /// their joint dependence is the true one.
    JointPrelimit,
    /// Exact stable path on the grid; `W` independent.
    StableExact,
    /// `S` and `s²` from a long innovation sequence; `W` independent.
    IndependentPrelimit,
    /// `Z = √(C(θ) Var η) B_H`.
    FractionalBrownian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitParams {
    pub kind: LimitKind,
    pub spec: InnovationSpec,
    pub g: WeightFunction,
    pub dist: RefDist,
    pub x_grid: Vec<f64>,
    pub k: usize,
    pub cov_model: CovModel,
    pub tau: f64,
    pub sup_mode: SupMode,
    /// Use `−f(x) ∫ g(Z) dZ` in the long-memory functional.
    pub negate_integral: bool,
    pub prelimit_block: usize,
    /// Innovations behind a long-run covariance estimate.
    pub long_run_n: usize,
}

impl LimitParams {
    /// Defaults: `k = 2^12`, marks on `[−3, 3]` at 241 points, plug-in covariance, `τ = ½`.
    pub fn new(kind: LimitKind, spec: InnovationSpec, g: WeightFunction, dist: RefDist) -> Self {
        Self {
            kind,
            spec,
            g,
            dist,
            x_grid: evenly_spaced_grid(3.0, 241).expect("valid default grid"),
            k: DEFAULT_STEPS,
            cov_model: CovModel::PlugInIid,
            tau: 0.5,
            sup_mode: SupMode::Signed,
            negate_integral: false,
            prelimit_block: DEFAULT_PRELIMIT_BLOCK,
            long_run_n: 1 << 16,
        }
    }

    pub fn with_grid(mut self, x_grid: Vec<f64>) -> Self {
        self.x_grid = x_grid;
        self
    }

    pub fn with_steps(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_cov_model(mut self, cov_model: CovModel) -> Self {
        self.cov_model = cov_model;
        self
    }
}

/// Draws of one limit functional with discretisation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEnsemble {
    pub kind: LimitKind,
    pub draws: Vec<f64>,
    pub k: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_size: usize,
    pub cov_model: CovModel,
    pub path_source: PathSource,
    pub rejections: usize,
    pub draws_attempted: usize,
}

impl LimitEnsemble {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,draw")?;
        for (r, d) in self.draws.iter().enumerate() {
            writeln!(w, "{r},{d:.16e}")?;
        }
        Ok(())
    }
}

/// Precomputed pieces shared by all draws of one ensemble.
pub struct LimitSampler {
    pub params: LimitParams,
    pub path_source: PathSource,
    /// Marks at which integrals are needed: the grid, plus `q` when required.
    marks: Vec<f64>,
    grid_index: Vec<usize>,
    q_index: Option<usize>,
    f_at_q: f64,
    fvals: Vec<f64>,
    density_on_grid: Vec<f64>,
    factor: Option<MarkFactor>,
    fbm: Option<(FbmSampler, f64)>,
}

fn density(dist: &RefDist, x: f64) -> Result<f64> {
    dist.pdf(x)
        .ok_or_else(|| Error::Domain(format!("reference law {} has no density", dist.label())))
}

impl LimitSampler {
    pub fn new(params: LimitParams, stream: &NoiseStream) -> Result<Self> {
        params.spec.validate()?;
        params.g.validate()?;
        check_grid(&params.x_grid)?;
        check_steps(params.k)?;
        if params.prelimit_block == 0 {
            return domain("prelimit_block must be positive");
        }
        let kind = params.kind;
        let spec = &params.spec;
        let long = spec.is_long_memory();
        if (kind == LimitKind::LongMemoryRecentered) != long {
            return domain(if long {
                format!("limit kind {kind:?} is not available under long memory; use long_memory_recentered")
            } else {
                "long_memory_recentered needs a long-memory moving average (1/2 < theta < 1)".to_string()
            });
        }
        let finite = spec.finite_variance();
        match kind {
            LimitKind::LseResidualSup if !finite => {
                return domain("lse_residual_sup needs finite-variance innovations; use lse_residual_sup_heavy")
            }
            LimitKind::LseResidualSupHeavy if finite => {
                return domain("lse_residual_sup_heavy needs infinite-variance innovations; use lse_residual_sup")
            }
            _ => {}
        }
        if kind.needs_quantile_mark() && !(params.tau > 0.0 && params.tau < 1.0) {
            return domain(format!("tau must lie in (0, 1), got {}", params.tau));
        }
        let path_source = if long {
            PathSource::FractionalBrownian
        } else if finite {
            PathSource::JointPrelimit
        } else if spec.family == Family::StableIid {
            PathSource::StableExact
        } else {
            PathSource::IndependentPrelimit
        };

        let mut marks = if kind.is_scalar() { Vec::new() } else { params.x_grid.clone() };
        let mut q_index = None;
        let mut f_at_q = f64::NAN;
        if kind.needs_quantile_mark() {
            let q = params.dist.quantile(params.tau);
            f_at_q = density(&params.dist, q)?;
            if !(f_at_q > 0.0) {
                return domain(format!("density at F^-1(tau) = {q} is {f_at_q}; the quantile limit needs it positive"));
            }
            let pos = marks.partition_point(|&x| x < q);
            if marks.get(pos) != Some(&q) {
                marks.insert(pos, q);
            }
            q_index = Some(pos);
        }
        let grid_index = if kind.is_scalar() {
            Vec::new()
        } else {
            params
                .x_grid
                .iter()
                .map(|x| marks.partition_point(|m| m < x))
                .collect()
        };
        let fvals = marks.iter().map(|&x| params.dist.cdf(x)).collect();
        let density_on_grid = match kind {
            LimitKind::QuantileResidualSup
            | LimitKind::LseResidualSup
            | LimitKind::LseResidualSupHeavy
            | LimitKind::LongMemoryRecentered => params
                .x_grid
                .iter()
                .map(|&x| density(&params.dist, x))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let factor = if kind.needs_field() && path_source != PathSource::JointPrelimit {
            Some(match params.cov_model {
                CovModel::PlugInIid => MarkFactor::plug_in(&params.dist, &marks)?,
                CovModel::LongRunEstimate => MarkFactor::long_run(spec, params.long_run_n, &params.dist, &marks, stream)?,
            })
        } else {
            None
        };
        let fbm = if path_source == PathSource::FractionalBrownian {
            let c = long_memory_variance_constant(spec.theta) * spec.noise.variance();
            Some((FbmSampler::new(spec.theta, params.k)?, c.sqrt()))
        } else {
            None
        };
        Ok(Self {
            params,
            path_source,
            marks,
            grid_index,
            q_index,
            f_at_q,
            fvals,
            density_on_grid,
            factor,
            fbm,
        })
    }

    /// Path, `s²`, and `∫ h dW(·, x)` over `marks` for each integrand `h`
    /// built from the path by `integrands`.
    fn ingredients(
        &self,
        stream: &NoiseStream,
        integrands: &dyn Fn(&PathGrid) -> Vec<Vec<f64>>,
    ) -> Result<(PathGrid, f64, Vec<Vec<f64>>)> {
        let p = &self.params;
        let k = p.k;
        match self.path_source {
            PathSource::FractionalBrownian => {
                let (sampler, scale) = self.fbm.as_ref().expect("fbm sampler");
                let z = sampler.draw(&stream.fork(tags::FBM)).scaled(*scale);
                Ok((z, f64::NAN, Vec::new()))
            }
            PathSource::StableExact => {
                let alpha = p.spec.alpha.unwrap_or(2.0);
                let (s, s2) = simulate_stable_path_with_squares(alpha, p.spec.skew, k, &stream.fork(tags::STABLE_PATH), false)?;
                let ints = self.independent_integrals(&s, integrands, stream)?;
                Ok((s, s2, ints))
            }
            PathSource::IndependentPrelimit | PathSource::JointPrelimit => {
                let b = p.prelimit_block;
                let big_n = k * b;
                let eps = p.spec.sample(big_n, &stream.fork(tags::PRELIMIT))?.eps;
                let a = normalizer_a_n(&p.spec, big_n);
                let mut values = Vec::with_capacity(k + 1);
                let mut acc = 0.0;
                values.push(0.0);
                for block in eps.chunks_exact(b) {
                    acc += block.iter().sum::<f64>();
                    values.push(acc / a);
                }
                let s = PathGrid { k, values };
                let s2 = eps.iter().map(|e| e * e).sum::<f64>() / (a * a);
                let ints = if self.path_source == PathSource::JointPrelimit {
                    let hs = integrands(&s);
                    prelimit_integrals(&eps, b, &hs, &self.fvals, &self.marks)
                } else {
                    self.independent_integrals(&s, integrands, stream)?
                };
                Ok((s, s2, ints))
            }
        }
    }

    fn independent_integrals(
        &self,
        s: &PathGrid,
        integrands: &dyn Fn(&PathGrid) -> Vec<Vec<f64>>,
        stream: &NoiseStream,
    ) -> Result<Vec<Vec<f64>>> {
        match &self.factor {
            Some(f) => f.integrals(&integrands(s), &stream.fork(tags::FIELD)),
            None => Ok(Vec::new()),
        }
    }

    fn sup_over_grid(&self, value_at: impl Fn(usize, usize) -> f64) -> f64 {
        let v: Vec<f64> = self
            .grid_index
            .iter()
            .enumerate()
            .map(|(gi, &mi)| value_at(gi, mi))
            .collect();
        sup_of(&v, self.params.sup_mode)
    }

    /// One draw; `Err(Degenerate)` when `∫S² dt` vanishes.
    pub fn draw_once(&self, stream: &NoiseStream) -> Result<f64> {
        let p = &self.params;
        let g = &p.g;
        let left = |s: &PathGrid| s.values[..s.k].to_vec();
        let g_left = |s: &PathGrid| s.values[..s.k].iter().map(|&v| g.eval(v)).collect::<Vec<_>>();
        match p.kind {
            LimitKind::MarkedSup => {
                if g.is_zero() {
                    return Ok(self.sup_over_grid(|_, _| 0.0));
                }
                let (_, _, ints) = self.ingredients(stream, &|s| vec![g_left(s)])?;
                Ok(self.sup_over_grid(|_, m| ints[0][m]))
            }
            LimitKind::QuantileError => {
                let (s, _, ints) = self.ingredients(stream, &|s| vec![left(s)])?;
                quantile_error_from_parts(ints[0][self.q_index.unwrap()], integral_of_square(&s), self.f_at_q)
            }
            LimitKind::QuantileResidualSup => {
                let (s, _, ints) = self.ingredients(stream, &|s| vec![left(s), g_left(s)])?;
                let q = quantile_error_from_parts(ints[0][self.q_index.unwrap()], integral_of_square(&s), self.f_at_q)?;
                let drift = q * integral_g_times_path(&s, g);
                Ok(self.sup_over_grid(|gi, m| self.density_on_grid[gi] * drift + ints[1][m]))
            }
            LimitKind::LseError => {
                let (s, s2, _) = self.ingredients(stream, &|_| Vec::new())?;
                lse_error(&s, s2)
            }
            LimitKind::LseResidualSup => {
                let (s, s2, ints) = self.ingredients(stream, &|s| vec![g_left(s)])?;
                let drift = lse_error(&s, s2)? * integral_g_times_path(&s, g);
                Ok(self.sup_over_grid(|gi, m| self.density_on_grid[gi] * drift + ints[0][m]))
            }
            LimitKind::LseResidualSupHeavy => {
                let (s, s2, _) = self.ingredients(stream, &|_| Vec::new())?;
                let drift = lse_error(&s, s2)? * integral_g_times_path(&s, g);
                Ok(self.sup_over_grid(|gi, _| self.density_on_grid[gi] * drift))
            }
            LimitKind::LongMemoryRecentered => {
                let (z, _, _) = self.ingredients(stream, &|_| Vec::new())?;
                let h: Vec<f64> = z.values[..z.k].iter().map(|&v| g.eval(v)).collect();
                let mut y = forward_integral(&h, &z.values)?;
                if p.negate_integral {
                    y = -y;
                }
                Ok(self.sup_over_grid(|gi, _| self.density_on_grid[gi] * y))
            }
        }
    }

    /// A draw, resampling degenerate ones; returns the value and the number
    /// of rejected attempts.
    pub fn draw(&self, stream: &NoiseStream) -> Result<(f64, usize)> {
        let mut s = *stream;
        for rejected in 0..=MAX_RETRIES {
            match self.draw_once(&s) {
                Err(Error::Degenerate(_)) => s = s.fork(tags::RETRY),
                other => return other.map(|v| (v, rejected)),
            }
        }
        Err(Error::Degenerate(format!(
            "{MAX_RETRIES} consecutive degenerate draws for stream {:?}",
            stream
        )))
    }

    /// `replications` draws; draw `r` uses stream id `stream.stream_id + r`.
    pub fn ensemble(&self, replications: usize, stream: &NoiseStream) -> Result<LimitEnsemble> {
        let out = (0..replications as u64)
            .into_par_iter()
            .map(|r| self.draw(&NoiseStream::new(stream.seed, stream.stream_id + r)))
            .collect::<Result<Vec<_>>>()?;
        let rejections: usize = out.iter().map(|(_, j)| j).sum();
        let p = &self.params;
        Ok(LimitEnsemble {
            kind: p.kind,
            draws: out.into_iter().map(|(v, _)| v).collect(),
            k: p.k,
            grid_min: p.x_grid[0],
            grid_max: p.x_grid[p.x_grid.len() - 1],
            grid_size: p.x_grid.len(),
            cov_model: p.cov_model,
            path_source: self.path_source,
            rejections,
            draws_attempted: replications + rejections,
        })
    }
}

fn lse_error(s: &PathGrid, s2: f64) -> Result<f64> {
    let d = integral_of_square(s);
    if !(d >= DEGENERATE_TOL) {
        return Err(Error::Degenerate(format!("∫S² dt = {d:e}")));
    }
    Ok(0.5 * (s.terminal().powi(2) - s2) / d)
}

/// `N^{−1/2} Σ_i h_{⌊(i−1)/B⌋} (I(ε_i ≤ x) − F(x))` at every mark, for each integrand.
fn prelimit_integrals(eps: &[f64], b: usize, hs: &[Vec<f64>], fvals: &[f64], marks: &[f64]) -> Vec<Vec<f64>> {
    let order = sort_order(eps);
    let root = (eps.len() as f64).sqrt();
    hs.iter()
        .map(|h| {
            let total: f64 = (0..eps.len()).map(|i| h[i / b]).sum();
            let mut below = 0.0;
            let mut pos = 0;
            marks
                .iter()
                .zip(fvals)
                .map(|(&x, &f)| {
                    while pos < order.len() && eps[order[pos]] <= x {
                        below += h[order[pos] / b];
                        pos += 1;
                    }
                    (below - f * total) / root
                })
                .collect()
        })
        .collect()
}

/// Convenience wrapper: sampler setup plus `replications` draws.
pub fn limit_sup_statistic(params: LimitParams, replications: usize, stream: &NoiseStream) -> Result<LimitEnsemble> {
    LimitSampler::new(params, stream)?.ensemble(replications, stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_spec() -> InnovationSpec {
        InnovationSpec::garch(1.0, 0.0, 0.0)
    }

    #[test]
    fn zero_weight_gives_zero_draws() {
        let p = LimitParams::new(LimitKind::MarkedSup, normal_spec(), WeightFunction::Constant(0.0), RefDist::standard_normal())
            .with_steps(64);
        let e = limit_sup_statistic(p, 20, &NoiseStream::new(1, 0)).unwrap();
        assert!(e.draws.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn regime_checks() {
        let lm = InnovationSpec::linear_ma(0.7);
        let p = LimitParams::new(LimitKind::MarkedSup, lm.clone(), WeightFunction::One, RefDist::standard_normal());
        assert!(LimitSampler::new(p, &NoiseStream::new(0, 0)).is_err());
        let p = LimitParams::new(LimitKind::LongMemoryRecentered, normal_spec(), WeightFunction::One, RefDist::standard_normal());
        assert!(LimitSampler::new(p, &NoiseStream::new(0, 0)).is_err());
        let p = LimitParams::new(LimitKind::QuantileError, normal_spec(), WeightFunction::One, RefDist::TwoPoint);
        assert!(LimitSampler::new(p, &NoiseStream::new(0, 0)).is_err());
    }

    #[test]
    fn single_mark_long_memory_is_density_times_integral() {
        let spec = InnovationSpec::linear_ma(0.7);
        let dist = RefDist::standard_normal();
        let p = LimitParams::new(LimitKind::LongMemoryRecentered, spec, WeightFunction::One, dist).with_grid(vec![0.0]).with_steps(256);
        let s = LimitSampler::new(p, &NoiseStream::new(0, 0)).unwrap();
        let st = NoiseStream::new(5, 3);
        let d = s.draw_once(&st).unwrap();
        let (z, _, _) = s.ingredients(&st, &|_| Vec::new()).unwrap();
        let f0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d - f0 * z.terminal()).abs() < 1e-12);
    }

    #[test]
    fn joint_prelimit_lse_error_has_unit_root_mean() {
        // E[½(W(1)² − 1)/∫W²] is negative (about −1.78)
        let p = LimitParams::new(LimitKind::LseError, normal_spec(), WeightFunction::One, RefDist::standard_normal())
            .with_steps(256);
        let e = limit_sup_statistic(p, 2000, &NoiseStream::new(9, 0)).unwrap();
        let mean = e.draws.iter().sum::<f64>() / e.draws.len() as f64;
        assert!((mean + 1.78).abs() < 0.3, "{mean}");
        assert_eq!(e.path_source, PathSource::JointPrelimit);
    }
}
