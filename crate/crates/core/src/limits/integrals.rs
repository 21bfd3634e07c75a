//! Forward (left-endpoint) Riemann sums and the scalar limit functionals
//! built from them.

use super::paths::PathGrid;
use crate::error::{domain, Error, Result};
use crate::marked::WeightFunction;

/// Denominators `∫S² dt` below this make a draw degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// `Σ_{j<k} h_j (I_{j+1} − I_j)` for integrand values `h_0..h_{k−1}` (or
/// `h_0..h_k`, the last being unused) and integrator values `I_0..I_k`.
pub fn forward_integral(integrand: &[f64], integrator: &[f64]) -> Result<f64> {
    let k = integrator.len().saturating_sub(1);
    if k == 0 || (integrand.len() != k && integrand.len() != k + 1) {
        return Err(Error::GridMismatch(format!(
            "integrand has {} points, integrator {}",
            integrand.len(),
            integrator.len()
        )));
    }
    Ok(integrand[..k]
        .iter()
        .zip(integrator.windows(2))
        .map(|(h, w)| h * (w[1] - w[0]))
        .sum())
}

/// `∫ g(P(t−)) dI(t)` with `I` on the same grid as `P`.
pub fn stochastic_integral(path: &PathGrid, g: &WeightFunction, integrator: &[f64]) -> Result<f64> {
    if integrator.len() != path.values.len() {
        return Err(Error::GridMismatch(format!(
            "path has {} points, integrator {}",
            path.values.len(),
            integrator.len()
        )));
    }
    let h: Vec<f64> = path.values[..path.k].iter().map(|&v| g.eval(v)).collect();
    forward_integral(&h, integrator)
}

/// Trapezoid `∫_0^1 h(P(t)) dt`.
pub fn time_integral(path: &PathGrid, h: impl Fn(f64) -> f64) -> f64 {
    let v: Vec<f64> = path.values.iter().map(|&x| h(x)).collect();
    let inner: f64 = v[1..path.k].iter().sum();
    (inner + 0.5 * (v[0] + v[path.k])) / path.k as f64
}

/// Trapezoid `∫ P² dt`.
pub fn integral_of_square(path: &PathGrid) -> f64 {
    time_integral(path, |x| x * x)
}

/// Trapezoid `∫ g(P) P dt`.
pub fn integral_g_times_path(path: &PathGrid, g: &WeightFunction) -> f64 {
    time_integral(path, |x| g.eval(x) * x)
}

fn check_denominator(d: f64) -> Result<()> {
    if !(d >= DEGENERATE_TOL) {
        return Err(Error::Degenerate(format!("∫S² dt = {d:e} below {DEGENERATE_TOL:e}")));
    }
    Ok(())
}

/// `−(∫ S dW(·, q) / ∫ S² dt) / f(q)` from its two ingredients.
pub fn quantile_error_from_parts(s_dw: f64, s_squared: f64, f_at_q: f64) -> Result<f64> {
    if !(f_at_q > 0.0) || !f_at_q.is_finite() {
        return domain(format!("density at the quantile must be positive, got {f_at_q}"));
    }
    check_denominator(s_squared)?;
    Ok(-s_dw / (f_at_q * s_squared))
}

/// `−(1/f(q)) ∫ S(t−) dW(t, q) / ∫ S² dt`, with `w_at_q` the field path at the mark `q`.
pub fn limit_quantile_error(s_path: &PathGrid, w_at_q: &[f64], f_at_q: f64) -> Result<f64> {
    let num = forward_integral(&s_path.values, w_at_q)?;
    quantile_error_from_parts(num, integral_of_square(s_path), f_at_q)
}

/// `½(S(1)² − s²) / ∫ S² dt`.
pub fn limit_lse_error(s_path: &PathGrid, s_squared_draw: f64) -> Result<f64> {
    if !(s_squared_draw >= 0.0) {
        return domain(format!("s² must be nonnegative, got {s_squared_draw}"));
    }
    let d = integral_of_square(s_path);
    check_denominator(d)?;
    Ok(0.5 * (s_path.terminal().powi(2) - s_squared_draw) / d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(k: usize) -> PathGrid {
        PathGrid::from_increments(&vec![1.0 / k as f64; k])
    }

    #[test]
    fn constant_integrand_telescopes() {
        let p = ramp(16);
        let w: Vec<f64> = (0..=16).map(|j| ((j * j) as f64).sin()).collect();
        let v = stochastic_integral(&p, &WeightFunction::One, &w).unwrap();
        assert!((v - w[16]).abs() < 1e-12);
        let z = stochastic_integral(&p, &WeightFunction::Constant(0.0), &w).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn grid_mismatch() {
        assert!(matches!(forward_integral(&[1.0; 3], &[0.0; 8]), Err(Error::GridMismatch(_))));
        assert!(stochastic_integral(&ramp(16), &WeightFunction::One, &[0.0; 5]).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_linear_square() {
        // ∫ t² dt on the ramp: trapezoid error is 1/(6k²)
        let k = 64;
        let v = integral_of_square(&ramp(k));
        assert!((v - (1.0 / 3.0 + 1.0 / (6.0 * (k * k) as f64))).abs() < 1e-14);
    }

    #[test]
    fn zero_path_is_degenerate() {
        let p = PathGrid::from_increments(&[0.0; 16]);
        assert!(matches!(limit_lse_error(&p, 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(limit_quantile_error(&p, &[0.0; 17], 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn quantile_error_scales_inversely_with_density() {
        let p = ramp(16);
        let w: Vec<f64> = (0..=16).map(|j| (j as f64).cos()).collect();
        let a = limit_quantile_error(&p, &w, 0.5).unwrap();
        let b = limit_quantile_error(&p, &w, 1.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-14);
    }

    #[test]
    fn lse_error_vanishes_when_terminal_matches() {
        let p = ramp(16);
        assert_eq!(limit_lse_error(&p, 1.0).unwrap(), 0.0);
    }
}
