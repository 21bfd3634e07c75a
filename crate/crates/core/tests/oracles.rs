//! Algorithms against brute-force or exact-arithmetic oracles.

use mep_core::distributions::RefDist;
use mep_core::estimators::{check_objective, lse_estimate, lse_identity_sides, quantile_estimate, QuantileIntercept};
use mep_core::innovations::InnovationSpec;
use mep_core::marked::{
    evenly_spaced_grid, marked_empirical, recentered_residual_statistic, residual_marked_empirical, residuals,
    sup_functional, SupMode, WeightFunction,
};
use mep_core::processes::{build_series, partial_sum_path, simulate_series};
use mep_core::NoiseStream;
use num_bigint::{BigInt, Sign};
use rand::Rng;

const SCALE: i64 = 2200;

/// `v · 2^{SCALE/2}` as an exact integer (every finite f64 is `m·2^e`, `e ≥ −1074`).
fn half_scaled(v: f64) -> BigInt {
    if v == 0.0 {
        return BigInt::from(0);
    }
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
    let m = BigInt::from(mant) << ((e + SCALE / 2) as usize);
    if v < 0.0 {
        -m
    } else {
        m
    }
}

fn pow2(e: i64) -> f64 {
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// Nearest f64 (ties to even) to `s · 2^{−SCALE}`.
fn round_scaled(s: &BigInt) -> f64 {
    let (sign, mag) = (s.sign(), s.magnitude().clone());
    if sign == Sign::NoSign {
        return 0.0;
    }
    let len = mag.bits() as i64;
    let lead = len - 1 - SCALE;
    let shift = if lead >= -1022 { len - 53 } else { SCALE - 1074 };
    let shift = shift.max(0);
    let mut q = &mag >> (shift as usize);
    if shift > 0 {
        let rem = &mag - (&q << (shift as usize));
        let half = num_bigint::BigUint::from(1u8) << ((shift - 1) as usize);
        let odd = q.bit(0);
        if rem > half || (rem == half && odd) {
            q += 1u8;
        }
    }
    let qf = u64::try_from(&q).expect("fits in 54 bits") as f64;
    let v = qf * pow2(shift - SCALE);
    if sign == Sign::Minus {
        -v
    } else {
        v
    }
}

/// `Σ_i w_i (I(e_i ≤ x) − F(x))`, exactly, then rounded once.
fn exact_double_loop(e: &[f64], w: &[f64], f: f64, x: f64) -> f64 {
    let mut s = BigInt::from(0);
    let one = half_scaled(1.0);
    let fb = half_scaled(f);
    for (ei, wi) in e.iter().zip(w) {
        let wb = half_scaled(*wi);
        if *ei <= x {
            s += &wb * &one;
        }
        s -= &wb * &fb;
    }
    round_scaled(&s)
}

#[test]
fn rounding_oracle_sanity() {
    for v in [1.0, -0.1, 1e-300, 5e-324, 123456.789, f64::MAX / 4.0] {
        let s = half_scaled(v) * half_scaled(1.0);
        assert_eq!(round_scaled(&s), v);
    }
    let s = half_scaled(0.1) * half_scaled(0.3);
    assert_eq!(round_scaled(&s), 0.1 * 0.3);
}

#[test]
fn sweep_equals_exact_double_loop() {
    let mut rng = NoiseStream::new(11, 0).rng();
    let dist = RefDist::standard_normal();
    let weights = [WeightFunction::One, WeightFunction::Identity, WeightFunction::BoundedSmooth];
    for case in 0..60 {
        let n = rng.random_range(1..=300);
        let m = rng.random_range(2..=64);
        let eps: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut s = build_series(&eps, 1.0, 0.0).unwrap();
        s.a_n = (n as f64).sqrt();
        let g = &weights[case % 3];
        let grid = evenly_spaced_grid(3.5, m).unwrap();
        let curve = marked_empirical(&s, g, &dist, &grid).unwrap();
        let w: Vec<f64> = s.x[..n].iter().map(|x| g.eval(x / s.a_n)).collect();
        for (j, &x) in grid.iter().enumerate() {
            let want = exact_double_loop(&eps, &w, dist.cdf(x), x) / (n as f64).sqrt();
            assert_eq!(curve.values[j], want, "case {case} mark {j}");
        }
    }
}

#[test]
fn quantile_solver_beats_fine_grid() {
    let spec = InnovationSpec::stable(2.0, 0.0);
    for r in 0..8 {
        let s = simulate_series(&spec, 50, 1.0, 0.0, &NoiseStream::new(5, r)).unwrap();
        let tau = [0.5, 0.25, 0.8][r as usize % 3];
        let est = quantile_estimate(&s, tau, QuantileIntercept::Known(0.1)).unwrap();
        let y: Vec<f64> = s.x[1..].iter().map(|v| v - 0.1).collect();
        let z = &s.x[..50];
        let lo = ((est.beta_hat - 1.0) * 1e5).ceil() as i64;
        let hi = ((est.beta_hat + 1.0) * 1e5).floor() as i64;
        let mut best = f64::INFINITY;
        for j in lo..=hi {
            best = best.min(check_objective(&y, z, tau, j as f64 * 1e-5));
        }
        assert!(est.objective_at_min <= best + 1e-12, "{} vs {best}", est.objective_at_min);
        assert!(best - est.objective_at_min <= 1e-3);
    }
}

#[test]
fn lse_identity_on_random_unit_roots() {
    for r in 0..50 {
        let spec = InnovationSpec::stable(1.5, 0.0);
        let s = simulate_series(&spec, 256, 1.0, 0.0, &NoiseStream::new(8, r)).unwrap();
        let (lhs, rhs, _) = lse_identity_sides(&s).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(lhs.abs()), "{lhs} {rhs}");
        let direct = {
            let n = s.n() as f64;
            let b = lse_estimate(&s).unwrap().beta_hat;
            n * (b - 1.0) * s.x[..s.n()].iter().map(|v| v * v).sum::<f64>() / (s.a_n * s.a_n) / n
        };
        assert!((direct - lhs).abs() <= 1e-8 * lhs.abs().max(1.0));
    }
}

#[test]
fn lse_closed_form_example() {
    let s = build_series(&[1.0, 1.0, 1.0], 1.0, 0.0).unwrap();
    assert_eq!(lse_estimate(&s).unwrap().beta_hat, 1.6);
}

#[test]
fn unit_root_path_is_prefix_sum() {
    let mut rng = NoiseStream::new(2, 2).rng();
    let eps: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = build_series(&eps, 1.0, 0.25).unwrap();
    let mut acc = 0.25;
    for (i, e) in eps.iter().enumerate() {
        acc += e;
        assert_eq!(s.x[i + 1], acc);
    }
}

#[test]
fn partial_sum_path_matches_direct_sum() {
    let mut rng = NoiseStream::new(3, 2).rng();
    let eps: Vec<f64> = (0..97).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = build_series(&eps, 1.0, 0.0).unwrap().with_normalizer(3.0);
    let p = partial_sum_path(&s, 10).unwrap();
    for t in [0.0, 0.013, 0.25, 0.5, 0.731, 0.99, 1.0] {
        let m = (97.0f64 * t).floor() as usize;
        let direct: f64 = eps[..m].iter().sum::<f64>() / 3.0;
        assert!((p.eval(t).unwrap() - direct).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn residual_curve_matches_direct_evaluation() {
    let spec = InnovationSpec::garch(0.1, 0.4, 0.4);
    let s = simulate_series(&spec, 200, 1.0, 0.0, &NoiseStream::new(4, 0)).unwrap();
    let dist = RefDist::standard_normal();
    let grid = evenly_spaced_grid(2.0, 9).unwrap();
    let g = WeightFunction::BoundedSmooth;
    let beta_hat = lse_estimate(&s).unwrap().beta_hat;
    let c = residual_marked_empirical(&s, beta_hat, &g, &dist, &grid).unwrap();
    let e = residuals(&s, beta_hat);
    for (j, &x) in grid.iter().enumerate() {
        let direct: f64 = (0..200)
            .map(|i| g.eval(s.x[i] / s.a_n) * (f64::from(u8::from(e[i] <= x)) - dist.cdf(x)))
            .sum::<f64>()
            / 200f64.sqrt();
        assert!((c.values[j] - direct).abs() < 1e-12);
    }
}

#[test]
fn recentered_statistic_term_by_term() {
    let spec = InnovationSpec::linear_ma(0.7);
    let s = simulate_series(&spec, 300, 1.0, 0.0, &NoiseStream::new(6, 0)).unwrap();
    let dist = RefDist::for_spec(&spec, 300).unwrap();
    let grid = evenly_spaced_grid(3.0, 13).unwrap();
    let g = WeightFunction::Identity;
    let beta_hat = lse_estimate(&s).unwrap().beta_hat;
    let f = |x: f64| dist.pdf(x).unwrap();
    let c = recentered_residual_statistic(&s, beta_hat, &g, &dist, f, &grid).unwrap();
    let e = residuals(&s, beta_hat);
    let mass: f64 = (0..300).map(|i| g.eval(s.x[i] / s.a_n) * s.x[i]).sum();
    for (j, &x) in grid.iter().enumerate() {
        let alpha_hat: f64 = (0..300)
            .map(|i| g.eval(s.x[i] / s.a_n) * (f64::from(u8::from(e[i] <= x)) - dist.cdf(x)))
            .sum();
        let direct = (alpha_hat - f(x) * (beta_hat - 1.0) * mass) / s.a_n;
        assert!((c.values[j] - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }
    let zero = recentered_residual_statistic(&s, beta_hat, &g, &dist, |_| 0.0, &grid).unwrap();
    let plain = residual_marked_empirical(&s, beta_hat, &g, &dist, &grid).unwrap();
    for (a, b) in zero.values.iter().zip(&plain.values) {
        // the plain curve is scaled by a_n too under long memory
        assert!((a - b).abs() < 1e-12);
    }
    let at_truth = recentered_residual_statistic(&s, 1.0, &g, &dist, f, &grid).unwrap();
    let plain_truth = residual_marked_empirical(&s, 1.0, &g, &dist, &grid).unwrap();
    assert_eq!(at_truth.values, plain_truth.values);
}

#[test]
fn sup_functional_matches_linear_scan() {
    let mut rng = NoiseStream::new(9, 9).rng();
    let spec = InnovationSpec::stable(1.7, 0.0);
    for r in 0..20 {
        let s = simulate_series(&spec, 100, 1.0, 0.0, &NoiseStream::new(10, r)).unwrap();
        let size = rng.random_range(2..50);
        let grid = evenly_spaced_grid(2.5, size).unwrap();
        let c = marked_empirical(&s, &WeightFunction::One, &RefDist::standard_normal(), &grid).unwrap();
        let mut signed = f64::NEG_INFINITY;
        let mut abs = 0.0f64;
        for &v in &c.values {
            if v > signed {
                signed = v;
            }
            if v.abs() > abs {
                abs = v.abs();
            }
        }
        assert_eq!(sup_functional(&c, SupMode::Signed).unwrap(), signed);
        assert_eq!(sup_functional(&c, SupMode::Abs).unwrap(), abs);
    }
}
