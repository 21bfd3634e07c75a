//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion outside `KNOWN_RED` fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mep_core::distributions::RefDist;
use mep_core::estimators::{check_objective, lse_estimate, lse_identity_sides, quantile_estimate, QuantileIntercept};
use mep_core::harness::{empirical_quantile, run_experiment, ExperimentConfig, Statistic};
use mep_core::innovations::InnovationSpec;
use mep_core::limits::fbm::{fbm_covariance, hurst};
use mep_core::limits::{simulate_mark_field, stochastic_integral, FbmSampler, MarkFactor};
use mep_core::marked::{decomposition_remainder, evenly_spaced_grid, marked_empirical, WeightFunction};
use mep_core::processes::{build_series, simulate_series};
use mep_core::NoiseStream;
use num_bigint::{BigInt, Sign};
use rand::Rng;
use rayon::prelude::*;

/// Criteria that currently fail for reasons documented with the project notes.
const KNOWN_RED: &[usize] = &[10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// exact arithmetic for criterion 1

const SCALE: i64 = 2200;

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

fn round_scaled(s: &BigInt) -> f64 {
    if s.sign() == Sign::NoSign {
        return 0.0;
    }
    let mag = s.magnitude().clone();
    let len = mag.bits() as i64;
    let shift = if len - 1 - SCALE >= -1022 { len - 53 } else { SCALE - 1074 }.max(0);
    let mut q = &mag >> (shift as usize);
    if shift > 0 {
        let rem = &mag - (&q << (shift as usize));
        let half = num_bigint::BigUint::from(1u8) << ((shift - 1) as usize);
        if rem > half || (rem == half && q.bit(0)) {
            q += 1u8;
        }
    }
    let v = u64::try_from(&q).unwrap() as f64 * pow2(shift - SCALE);
    if s.sign() == Sign::Minus {
        -v
    } else {
        v
    }
}

fn crit1() -> Outcome {
    let mut rng = NoiseStream::new(101, 0).rng();
    let dist = RefDist::standard_normal();
    let gs = [WeightFunction::One, WeightFunction::Identity, WeightFunction::BoundedSmooth];
    let one = half_scaled(1.0);
    let mut mismatches = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=500);
        let m = rng.random_range(2..=64);
        let eps: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = build_series(&eps, 1.0, 0.0).unwrap().with_normalizer((n as f64).sqrt());
        let g = &gs[case % 3];
        let grid = evenly_spaced_grid(3.5, m).unwrap();
        let curve = marked_empirical(&s, g, &dist, &grid).unwrap();
        let w: Vec<BigInt> = s.x[..n].iter().map(|x| half_scaled(g.eval(x / s.a_n))).collect();
        for (j, &x) in grid.iter().enumerate() {
            let fb = half_scaled(dist.cdf(x));
            let mut acc = BigInt::from(0);
            for (e, wi) in eps.iter().zip(&w) {
                if *e <= x {
                    acc += wi * &one;
                }
                acc -= wi * &fb;
            }
            if curve.values[j] != round_scaled(&acc) / (n as f64).sqrt() {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("200 cases, {mismatches} mismatching marks"))
}

/// Minimum of a convex function over the integers `lo..=hi`: bisect on the
/// sign of the forward difference, then scan a window against rounding ties.
fn lattice_min_convex(f: impl Fn(i64) -> f64, lo: i64, hi: i64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let m = a + (b - a) / 2;
        if f(m + 1) - f(m) >= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    ((a - 2000).max(lo)..=(b + 2000).min(hi)).map(f).fold(f64::INFINITY, f64::min)
}

fn crit2() -> Outcome {
    let specs = [
        InnovationSpec::garch(1.0, 0.0, 0.0),
        InnovationSpec::stable(1.5, 0.0),
        InnovationSpec::garch(0.1, 0.4, 0.4),
        InnovationSpec::linear_ma(1.5),
    ];
    let taus = [0.5, 0.25, 0.75, 0.1];
    let gaps: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|r| {
            let spec = &specs[r as usize % 4];
            let tau = taus[r as usize / 4 % 4];
            let s = simulate_series(spec, 50, 1.0, 0.0, &NoiseStream::new(102, r)).unwrap();
            let est = quantile_estimate(&s, tau, QuantileIntercept::Known(0.0)).unwrap();
            let y = &s.x[1..];
            let z = &s.x[..50];
            let lo = ((est.beta_hat - 1.0) * 1e6).ceil() as i64;
            let hi = ((est.beta_hat + 1.0) * 1e6).floor() as i64;
            let at = |j: i64| check_objective(y, z, tau, j as f64 * 1e-6);
            let best = if r < 10 {
                (lo..=hi).map(at).fold(f64::INFINITY, f64::min)
            } else {
                lattice_min_convex(at, lo, hi)
            };
            // negative means the lattice found something lower
            best - est.objective_at_min
        })
        .collect();
    let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let below = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        below >= -1e-12 && worst <= 1e-5,
        format!("100 series (10 by full scan), lattice minus solver in [{below:.2e}, {worst:.2e}]"),
    )
}

fn crit3() -> Outcome {
    let specs = [
        InnovationSpec::garch(1.0, 0.0, 0.0),
        InnovationSpec::stable(1.2, 0.5),
        InnovationSpec::garch(0.1, 0.4, 0.4),
        InnovationSpec::linear_ma(0.7),
    ];
    let mut worst = 0.0f64;
    for r in 0..100u64 {
        let mut rng = NoiseStream::new(103, 1000 + r).rng();
        let n = rng.random_range(10..2000);
        let x0 = rng.random_range(-2.0..2.0);
        let s = simulate_series(&specs[r as usize % 4], n, 1.0, x0, &NoiseStream::new(103, r)).unwrap();
        let (lhs, rhs, _) = lse_identity_sides(&s).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    outcome(worst <= 1e-10, format!("100 series, worst relative gap {worst:.2e}"))
}

fn crit4() -> Outcome {
    let sampler = FbmSampler::new(0.7, 1 << 14).unwrap();
    let g = WeightFunction::Identity;
    let paths: Vec<_> = (0..100).map(|r| sampler.draw(&NoiseStream::new(104, r))).collect();
    let medians: Vec<f64> = [64, 16, 4, 1]
        .iter()
        .map(|&f| {
            let gaps: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let c = p.coarsen(f).unwrap();
                    (stochastic_integral(&c, &g, &c.values).unwrap() - 0.5 * c.terminal().powi(2)).abs()
                })
                .collect();
            empirical_quantile(&gaps, 0.5).unwrap()
        })
        .collect();
    let pass = medians.windows(2).all(|w| w[1] < w[0]) && medians[3] < 0.01;
    outcome(pass, format!("medians at k=2^8..2^14: {}", fmt(&medians)))
}

fn crit5() -> Outcome {
    let k = 100;
    let pairs = [(10, 20), (25, 75), (50, 50), (30, 100), (90, 100)];
    let draws = 10_000;
    let mut worst = 0.0f64;
    for (i, theta) in [0.6, 0.7, 0.9].into_iter().enumerate() {
        let h = hurst(theta);
        let sampler = FbmSampler::new(theta, k).unwrap();
        let paths: Vec<_> = (0..draws).map(|r| sampler.draw(&NoiseStream::new(105 + i as u64, r))).collect();
        for &(a, b) in &pairs {
            let (s, t) = (a as f64 / k as f64, b as f64 / k as f64);
            let c: f64 = paths.iter().map(|p| p.values[a] * p.values[b]).sum::<f64>() / draws as f64;
            let want = fbm_covariance(h, s, t);
            let se = ((fbm_covariance(h, s, s) * fbm_covariance(h, t, t) + want * want) / draws as f64).sqrt();
            worst = worst.max((c - want).abs() / se);
        }
    }
    outcome(worst < 3.0, format!("15 covariances, worst |error| = {worst:.2} standard errors"))
}

fn crit6() -> Outcome {
    let dist = RefDist::standard_normal();
    let grid = vec![-1.5, -0.5, 0.0, 0.5, 1.5];
    let factor = MarkFactor::plug_in(&dist, &grid).unwrap();
    let k = 64;
    let draws = 10_000;
    let fields: Vec<_> = (0..draws)
        .map(|r| simulate_mark_field(k, &factor, &NoiseStream::new(108, r)).unwrap())
        .collect();
    let second = |j: usize, m: usize| fields.iter().map(|f| f.at(j, m).powi(2)).sum::<f64>() / draws as f64;
    let (mut worst_var, mut worst_lin) = (0.0f64, 0.0f64);
    for (m, &x) in grid.iter().enumerate() {
        let mu = dist.cdf(x) * (1.0 - dist.cdf(x));
        worst_var = worst_var.max((second(k, m) / mu - 1.0).abs());
        for j in [16, 32, 48] {
            let t = j as f64 / k as f64;
            worst_lin = worst_lin.max((second(j, m) / (t * mu) - 1.0).abs());
        }
    }
    outcome(
        worst_var < 0.03 && worst_lin < 0.05,
        format!("worst relative error: Var W(1,x) {worst_var:.4}, Var W(t,x)/t {worst_lin:.4}"),
    )
}

fn crit7() -> Outcome {
    let spec = InnovationSpec::garch(0.1, 0.4, 0.4);
    let grid = evenly_spaced_grid(3.0, 241).unwrap();
    let medians: Vec<f64> = (9..=13)
        .enumerate()
        .map(|(m, p)| {
            let n = 1usize << p;
            let dist = RefDist::for_spec(&spec, n).unwrap();
            let v: Vec<f64> = (0..200u64)
                .into_par_iter()
                .map(|r| {
                    let s = simulate_series(&spec, n, 1.0, 0.0, &NoiseStream::new(109, m as u64 * 200 + r)).unwrap();
                    let b = lse_estimate(&s).unwrap().beta_hat;
                    decomposition_remainder(&s, b, &WeightFunction::One, &dist, &grid).unwrap()
                })
                .collect();
            empirical_quantile(&v, 0.5).unwrap()
        })
        .collect();
    let pass = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass,
        format!("tail index {:.2}, medians n=2^9..2^13: {}", spec.tail_index(), fmt(&medians)),
    )
}

fn ks_study(config: ExperimentConfig, bound: f64) -> Outcome {
    let report = run_experiment(&config).unwrap();
    let row = &report.rows[0];
    outcome(
        row.ks < bound,
        format!("KS {:.4} (bound {bound}), R_eff {}, limit rejections {}", row.ks, row.r_effective, report.limit.rejections),
    )
}

fn crit8() -> Outcome {
    let mut c = ExperimentConfig::new(InnovationSpec::garch(1.0, 0.0, 0.0), vec![1 << 13], 2000, Statistic::LseScaledError);
    c.base_seed = 110;
    ks_study(c, 0.08)
}

fn crit9() -> Outcome {
    let mut c = ExperimentConfig::new(InnovationSpec::stable(1.5, 0.0), vec![1 << 13], 1000, Statistic::QuantileScaledError);
    c.tau = 0.5;
    c.base_seed = 111;
    ks_study(c, 0.10)
}

fn crit10() -> Outcome {
    let n = 1 << 13;
    let spec = InnovationSpec::linear_ma(0.7).with_truncation(16 * n);
    let mut c = ExperimentConfig::new(spec, vec![n], 1000, Statistic::MarkedSup);
    c.base_seed = 112;
    ks_study(c, 0.12)
}

fn mep(args: &[&str]) -> std::process::Output {
    let o = Command::new(env!("CARGO_BIN_EXE_mep")).args(args).output().unwrap();
    assert!(o.status.success(), "mep {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn crit11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"spec":{"family":"garch11","omega":0.1,"a":0.4,"b":0.4},"n_list":[200,400,800],"R":200,
            "statistic":"residual_sup","g_id":"bounded_smooth","grid_size":61,"k":512,"base_seed":3}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let series = tmp.path().join("series.csv");
    let mut compared = 0;
    let mut differing = Vec::new();
    for sub in ["simulate", "estimate", "limit-mc", "convergence-study", "gof-test"] {
        let outs: Vec<_> = ["1", "8"]
            .iter()
            .map(|t| {
                let out = tmp.path().join(format!("{sub}-{t}"));
                let o = out.to_str().unwrap();
                let mut args = vec![sub, "--config", cfg, "--out", o, "--threads", t, "--seed", "42"];
                if sub == "gof-test" {
                    args.extend(["--series", series.to_str().unwrap()]);
                }
                mep(&args);
                dir_bytes(&out)
            })
            .collect();
        if sub == "simulate" {
            fs::copy(tmp.path().join("simulate-1/series_n400_r0.csv"), &series).unwrap();
        }
        compared += outs[0].len();
        if outs[0] != outs[1] {
            differing.push(sub);
        }
    }
    outcome(
        differing.is_empty() && compared >= 8,
        format!("5 subcommands, {compared} files compared, differing: {differing:?}"),
    )
}

fn crit12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let base = r#"{"spec":{"family":"garch11","omega":1.0,"a":0.0,"b":0.0},"n_list":[4096],"R":RR,
        "statistic":"residual_sup","estimator":"lse","g_id":"identity"}"#;
    let cfg = tmp.path().join("gof.json");
    fs::write(&cfg, base.replace("RR", "1000")).unwrap();
    let lim_cfg = tmp.path().join("limit.json");
    fs::write(&lim_cfg, base.replace("RR", "4000")).unwrap();
    let lim = tmp.path().join("lim");
    mep(&["limit-mc", "--config", lim_cfg.to_str().unwrap(), "--out", lim.to_str().unwrap(), "--seed", "999999"]);
    let critical = lim.join("limit_summary.json");
    let runs = 200;
    let mut rejections = 0;
    for seed in 1..=runs {
        let out = tmp.path().join(format!("run{seed}"));
        let o = out.to_str().unwrap();
        let seed = seed.to_string();
        mep(&["simulate", "--config", cfg.to_str().unwrap(), "--out", o, "--seed", &seed]);
        let series = out.join("series_n4096_r0.csv");
        mep(&[
            "gof-test",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            o,
            "--seed",
            &seed,
            "--series",
            series.to_str().unwrap(),
            "--critical",
            critical.to_str().unwrap(),
        ]);
        let d: serde_json::Value = serde_json::from_slice(&fs::read(out.join("gof_decision.json")).unwrap()).unwrap();
        let at95 = d["decisions"].as_array().unwrap().iter().find(|x| x["level"] == 0.95).unwrap();
        if at95["reject"] == true {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / runs as f64;
    outcome((0.02..=0.09).contains(&rate), format!("{rejections}/{runs} rejections at 5%, rate {rate:.3}"))
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("marked sweep equals exact double loop", crit1),
        ("quantile solver vs 1e-6 lattice", crit2),
        ("LSE algebraic identity", crit3),
        ("Young sums for fBm", crit4),
        ("fBm covariance", crit5),
        ("plug-in field marginals", crit6),
        ("residual decomposition remainder", crit7),
        ("LSE error, Gaussian unit root", crit8),
        ("quantile error, stable alpha = 1.5", crit9),
        ("long-memory sup statistic", crit10),
        ("thread-count independence of CLI output", crit11),
        ("GoF test size", crit12),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let tag = match (o.pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:2} {tag}: {name}: {} [{secs:.1} s]", o.detail);
        if !o.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
