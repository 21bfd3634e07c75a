//! Fractional Brownian motion `B_H`, `H = 3/2 − θ`, by circulant embedding
//! of the fractional Gaussian noise covariance (Davies–Harte), with a dense
//! Cholesky fallback.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use statrs::function::gamma::gamma;
use std::sync::Arc;

use super::paths::{check_steps, PathGrid};
use crate::error::{domain, Error, Result};
use crate::rng::NoiseStream;

/// Largest grid the Cholesky fallback accepts.
pub const CHOLESKY_MAX_STEPS: usize = 1 << 12;
/// Embedding eigenvalues below this trigger the fallback.
pub const EMBEDDING_TOL: f64 = -1e-9;

pub fn hurst(theta: f64) -> f64 {
    1.5 - theta
}

/// `Cov(B_H(s), B_H(t)) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// Autocovariance of unit-step fractional Gaussian noise at `lag`.
pub fn fgn_autocovariance(h: f64, lag: usize) -> f64 {
    let l = lag as f64;
    let p = 2.0 * h;
    0.5 * ((l + 1.0).powf(p) - 2.0 * l.powf(p) + (l - 1.0).abs().powf(p))
}

/// `C(θ) = lim Var(Σ_{i≤n} ε_i)/n^{3−2θ}` for `ε_i = Σ_{j≥1} j^{−θ} η_{i−j}`
/// with unit-variance `η`:
/// `C(θ) = Γ(1−θ)² / (Γ(4−2θ) sin(π(3/2−θ)))`. The long-memory partial-sum
/// limit is `√C(θ) · B_H`.
pub fn long_memory_variance_constant(theta: f64) -> f64 {
    let g = gamma(1.0 - theta);
    g * g / (gamma(4.0 - 2.0 * theta) * (std::f64::consts::PI * (1.5 - theta)).sin())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.5 && theta <= 1.0) {
        return domain(format!("theta must lie in (1/2, 1], got {theta}"));
    }
    Ok(())
}

enum Method {
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky(DMatrix<f64>),
}

/// Reusable fBm sampler for a fixed `(θ, k)`.
pub struct FbmSampler {
    pub theta: f64,
    pub k: usize,
    method: Method,
}

impl FbmSampler {
    pub fn new(theta: f64, k: usize) -> Result<Self> {
        check_theta(theta)?;
        check_steps(k)?;
        let h = hurst(theta);
        let m = 2 * k;
        let mut c: Vec<Complex64> = (0..m)
            .map(|j| {
                let lag = if j <= k { j } else { m - j };
                Complex64::new(fgn_autocovariance(h, lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut c);
        let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min < EMBEDDING_TOL {
            return Self::cholesky(theta, k);
        }
        let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
        Ok(Self {
            theta,
            k,
            method: Method::Circulant { sqrt_eig, fft },
        })
    }

    /// Dense Cholesky factor of the path covariance at `t_1..t_k`.
    pub fn cholesky(theta: f64, k: usize) -> Result<Self> {
        check_theta(theta)?;
        check_steps(k)?;
        if k > CHOLESKY_MAX_STEPS {
            return Err(Error::Numerical(format!(
                "Cholesky fallback limited to k <= {CHOLESKY_MAX_STEPS}; use a larger circulant embedding for k = {k}"
            )));
        }
        let h = hurst(theta);
        let cov = DMatrix::from_fn(k, k, |i, j| fbm_covariance(h, (i + 1) as f64 / k as f64, (j + 1) as f64 / k as f64));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("fBm covariance is not positive definite".into()))?;
        Ok(Self {
            theta,
            k,
            method: Method::Cholesky(chol.l()),
        })
    }

    pub fn uses_embedding(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    /// One standard fBm path (`Var B_H(1) = 1`).
    pub fn draw(&self, stream: &NoiseStream) -> PathGrid {
        let mut rng = stream.rng();
        let k = self.k;
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut w: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut w);
                let scale = (k as f64).powf(-hurst(self.theta));
                let inc: Vec<f64> = w[..k].iter().map(|z| z.re * scale).collect();
                PathGrid::from_increments(&inc)
            }
            Method::Cholesky(l) => {
                let z = nalgebra::DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let v = l * z;
                let mut values = Vec::with_capacity(k + 1);
                values.push(0.0);
                values.extend(v.iter());
                PathGrid { k, values }
            }
        }
    }
}

/// One fBm path with Hurst index `3/2 − θ` on `k` steps.
pub fn simulate_fbm(theta: f64, k: usize, stream: &NoiseStream) -> Result<PathGrid> {
    Ok(FbmSampler::new(theta, k)?.draw(stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_nonnegative_for_long_memory() {
        for theta in [0.55, 0.7, 0.9, 1.0] {
            assert!(FbmSampler::new(theta, 1024).unwrap().uses_embedding());
        }
    }

    #[test]
    fn theta_one_is_brownian() {
        let s = FbmSampler::new(1.0, 16).unwrap();
        let mut c = 0.0;
        let reps = 20_000;
        for r in 0..reps {
            let p = s.draw(&NoiseStream::new(8, r));
            c += p.values[4] * p.values[12];
        }
        let c = c / reps as f64;
        // min(0.25, 0.75) = 0.25; sd of the product mean ≈ 0.0035
        assert!((c - 0.25).abs() < 0.015, "{c}");
    }

    #[test]
    fn cholesky_bounds_and_agreement() {
        assert!(matches!(FbmSampler::cholesky(0.7, 8192), Err(Error::Numerical(_))));
        let s = FbmSampler::cholesky(0.7, 32).unwrap();
        assert!(!s.uses_embedding());
        let reps = 10_000;
        let v = (0..reps)
            .map(|r| s.draw(&NoiseStream::new(2, r)).terminal().powi(2))
            .sum::<f64>()
            / reps as f64;
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn rejects_short_memory_theta() {
        assert!(simulate_fbm(0.4, 64, &NoiseStream::new(0, 0)).is_err());
        assert!(simulate_fbm(1.2, 64, &NoiseStream::new(0, 0)).is_err());
    }

    #[test]
    fn variance_constant_matches_quadrature() {
        // C(θ) = ∫_{−∞}^{1} (∫_0^1 (v−u)_+^{−θ} dv)² du, done on u = 1 − e^s
        let theta: f64 = 0.7;
        let inner = |u: f64| ((1.0 - u).powf(1.0 - theta) - (0f64.max(u) - u).powf(1.0 - theta)) / (1.0 - theta);
        // split at u = 0: [0, 1] with substitution u = 1 − w^{1/(1−θ)}... use plain midpoint on a fine mesh
        let mut total = 0.0;
        let steps = 2_000_000;
        for i in 0..steps {
            let u = (i as f64 + 0.5) / steps as f64;
            total += inner(u).powi(2) / steps as f64;
        }
        // (−∞, 0]: u = −(e^s − 1), s ∈ [0, 40]
        let steps = 400_000;
        let h = 40.0 / steps as f64;
        for i in 0..steps {
            let s = (i as f64 + 0.5) * h;
            let u = 1.0 - s.exp();
            total += inner(u).powi(2) * s.exp() * h;
        }
        let c = long_memory_variance_constant(theta);
        assert!((c - total).abs() / c < 1e-3, "{c} vs {total}");
    }
}
