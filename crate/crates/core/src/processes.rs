//! AR(1) paths `X_i = β X_{i−1} + ε_i` and their normalised partial sums.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{domain, Error, Result};
use crate::innovations::{normalizer_a_n, InnovationSpec};
use crate::rng::NoiseStream;

/// One realised path. `x.len() == eps.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub beta_true: f64,
    pub a_n: f64,
    pub spec: Option<InnovationSpec>,
    pub stream: Option<NoiseStream>,
    /// ℓ² mass of the moving-average coefficients dropped by truncation.
    pub truncation_tail_mass: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SeriesSample {
    pub fn n(&self) -> usize {
        self.eps.len()
    }

    /// Long memory decides whether marked curves are scaled by `a_n` or `√n`.
    pub fn is_long_memory(&self) -> bool {
        self.spec.as_ref().is_some_and(|s| s.is_long_memory())
    }

    pub fn with_normalizer(mut self, a_n: f64) -> Self {
        self.a_n = a_n;
        self
    }

    pub fn with_spec(mut self, spec: InnovationSpec) -> Self {
        self.a_n = normalizer_a_n(&spec, self.n());
        self.spec = Some(spec);
        self
    }

    /// `max_i |X_i| / a_n`, the harness's stochastic-boundedness tripwire.
    pub fn max_abs_scaled(&self) -> f64 {
        self.x.iter().fold(0.0f64, |m, v| m.max(v.abs())) / self.a_n
    }

    /// CSV with header `i,X_i,eps_i`; row 0 has an empty `eps_i`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,X_i,eps_i")?;
        writeln!(w, "0,{:.16e},", self.x[0])?;
        for (i, (x, e)) in self.x[1..].iter().zip(&self.eps).enumerate() {
            writeln!(w, "{},{:.16e},{:.16e}", i + 1, x, e)?;
        }
        Ok(())
    }

    /// Reads the format of [`SeriesSample::write_csv`]. `β` is recovered by
    /// the caller; the returned sample carries `beta_true = 1` and `a_n = √n`.
    pub fn read_csv<R: BufRead>(r: R) -> Result<SeriesSample> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty series file".into()))??;
        if header.trim() != "i,X_i,eps_i" {
            return Err(Error::Parse(format!("unexpected header '{}'", header.trim())));
        }
        let mut x = Vec::new();
        let mut eps = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", lineno + 2)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let idx: usize = cols[0]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if idx != x.len() {
                return Err(Error::Parse(format!("line {}: index {idx} out of order", lineno + 2)));
            }
            x.push(num(cols[1])?);
            if idx > 0 {
                eps.push(num(cols[2])?);
            }
        }
        if eps.is_empty() {
            return Err(Error::Parse("series needs at least two rows".into()));
        }
        let n = eps.len();
        Ok(SeriesSample {
            x,
            eps,
            beta_true: 1.0,
            a_n: (n as f64).sqrt(),
            spec: None,
            stream: None,
            truncation_tail_mass: None,
            warnings: Vec::new(),
        })
    }
}

/// Applies the recursion to `eps`; `a_n` defaults to `√n`.
pub fn build_series(eps: &[f64], beta: f64, x0: f64) -> Result<SeriesSample> {
    if eps.is_empty() {
        return domain("eps must be nonempty");
    }
    let mut x = Vec::with_capacity(eps.len() + 1);
    x.push(x0);
    let mut prev = x0;
    for &e in eps {
        prev = beta * prev + e;
        x.push(prev);
    }
    Ok(SeriesSample {
        x,
        eps: eps.to_vec(),
        beta_true: beta,
        a_n: (eps.len() as f64).sqrt(),
        spec: None,
        stream: None,
        truncation_tail_mass: None,
        warnings: Vec::new(),
    })
}

/// Draws innovations from `spec` and builds the path.
pub fn simulate_series(
    spec: &InnovationSpec,
    n: usize,
    beta: f64,
    x0: f64,
    stream: &NoiseStream,
) -> Result<SeriesSample> {
    let draw = spec.sample(n, stream)?;
    let mut s = build_series(&draw.eps, beta, x0)?.with_spec(spec.clone());
    s.stream = Some(*stream);
    s.truncation_tail_mass = draw.truncation_tail_mass;
    s.warnings = draw.warnings;
    Ok(s)
}

/// `t ↦ S_n(t)/a_n` sampled at `t_j = j/k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSumPath {
    prefix: Vec<f64>,
    a_n: f64,
    k: usize,
}

impl PartialSumPath {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `S_n(t)/a_n = a_n^{-1} Σ_{i ≤ ⌊nt⌋} ε_i`, right-continuous with left limits.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return domain(format!("t must lie in [0, 1], got {t}"));
        }
        let n = self.prefix.len() - 1;
        let mut i = ((n as f64) * t).floor() as usize;
        if i < n && (i + 1) as f64 <= n as f64 * t {
            i += 1;
        }
        Ok(self.prefix[i.min(n)] / self.a_n)
    }

    /// Values at the grid points `j/k`, `j = 0..=k`.
    pub fn grid_values(&self) -> Vec<f64> {
        let n = self.prefix.len() - 1;
        (0..=self.k)
            .map(|j| self.prefix[n * j / self.k] / self.a_n)
            .collect()
    }
}

pub fn partial_sum_path(series: &SeriesSample, k_points: usize) -> Result<PartialSumPath> {
    if k_points == 0 {
        return domain("k_points must be at least 1");
    }
    let mut prefix = Vec::with_capacity(series.n() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &e in &series.eps {
        acc += e;
        prefix.push(acc);
    }
    Ok(PartialSumPath {
        prefix,
        a_n: series.a_n,
        k: k_points,
    })
}
