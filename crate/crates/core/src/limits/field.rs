//! The Gaussian mark field `W(t, x)`: Brownian in `t`, with covariance
//! `Γ(x, y)` across marks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::paths::check_steps;
use crate::distributions::RefDist;
use crate::error::{domain, Error, Result};
use crate::innovations::InnovationSpec;
use crate::marked::check_grid;
use crate::rng::{tags, NoiseStream};

/// Eigenvalues of `Γ` below `−CLIP_TOL` are an error; those above are clipped to 0.
pub const CLIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovModel {
    /// `Γ(x, y) = F(min(x, y)) − F(x)F(y)`.
    #[default]
    PlugInIid,
    /// Batch-means estimate from a simulated innovation sequence.
    LongRunEstimate,
}

/// `F(min(x_a, x_b)) − F(x_a)F(x_b)` for ascending marks with `F` values `fvals`.
pub fn plug_in_covariance(fvals: &[f64]) -> DMatrix<f64> {
    let m = fvals.len();
    DMatrix::from_fn(m, m, |a, b| fvals[a.min(b)] - fvals[a] * fvals[b])
}

/// Batch-means long-run covariance of the indicator process
/// `I(ε_i ≤ x) − F(x)`: blocks of length `B = ⌊√n⌋`,
/// `Γ(x, y) = mean_b D_b(x) D_b(y) / B` with `D_b` the block sums.
pub fn batch_means_covariance(eps: &[f64], x_grid: &[f64], fvals: &[f64]) -> Result<DMatrix<f64>> {
    let n = eps.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b < 1 || n / b < 2 {
        return domain(format!("need at least two batches for a long-run estimate, n = {n}"));
    }
    let m = x_grid.len();
    let nb = n / b;
    let mut gamma = DMatrix::<f64>::zeros(m, m);
    let mut d = DVector::<f64>::zeros(m);
    for block in eps.chunks_exact(b) {
        let mut sorted = block.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (j, (&x, &f)) in x_grid.iter().zip(fvals).enumerate() {
            let count = sorted.partition_point(|&e| e <= x);
            d[j] = count as f64 - b as f64 * f;
        }
        gamma.ger(1.0, &d, &d, 1.0);
    }
    Ok(gamma / (nb * b) as f64)
}

/// Factor `L` with `L Lᵀ = Γ` (symmetrized, small negative eigenvalues clipped).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkFactor {
    pub model: CovModel,
    pub x_grid: Vec<f64>,
    /// `m × r`, one column per retained eigenvalue.
    pub l: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl MarkFactor {
    pub fn from_covariance(gamma: &DMatrix<f64>, x_grid: &[f64], model: CovModel) -> Result<Self> {
        check_grid(x_grid)?;
        let m = x_grid.len();
        if gamma.nrows() != m || gamma.ncols() != m {
            return Err(Error::GridMismatch(format!(
                "covariance is {}×{} but the mark grid has {m} points",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        let sym = (gamma + gamma.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -CLIP_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
        let l = DMatrix::from_fn(m, keep.len(), |i, c| {
            eig.eigenvectors[(i, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
        });
        Ok(Self {
            model,
            x_grid: x_grid.to_vec(),
            l,
            min_eigenvalue: min,
        })
    }

    /// Plug-in factor for the reference law `dist`.
    pub fn plug_in(dist: &RefDist, x_grid: &[f64]) -> Result<Self> {
        check_grid(x_grid)?;
        let fvals: Vec<f64> = x_grid.iter().map(|&x| dist.cdf(x)).collect();
        Self::from_covariance(&plug_in_covariance(&fvals), x_grid, CovModel::PlugInIid)
    }

    /// Batch-means factor from `n` innovations of `spec`.
    pub fn long_run(spec: &InnovationSpec, n: usize, dist: &RefDist, x_grid: &[f64], stream: &NoiseStream) -> Result<Self> {
        check_grid(x_grid)?;
        let eps = spec.sample(n, &stream.fork(tags::LONG_RUN))?.eps;
        let fvals: Vec<f64> = x_grid.iter().map(|&x| dist.cdf(x)).collect();
        let gamma = batch_means_covariance(&eps, x_grid, &fvals)?;
        Self::from_covariance(&gamma, x_grid, CovModel::LongRunEstimate)
    }

    pub fn marks(&self) -> usize {
        self.l.nrows()
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    /// Jointly Gaussian vectors `∫ h^a dW(·, x)` over the marks for the
    /// integrands `h^a` (left-endpoint values on the time grid).
    ///
    /// Only the Gram matrix `Σ_j h^a_j h^b_j / k` enters the law, so the
    /// draws go through its square root instead of a full field.
    pub fn integrals(&self, integrands: &[Vec<f64>], stream: &NoiseStream) -> Result<Vec<Vec<f64>>> {
        let p = integrands.len();
        if p == 0 {
            return Ok(Vec::new());
        }
        let k = integrands[0].len();
        if integrands.iter().any(|h| h.len() != k) || k == 0 {
            return Err(Error::GridMismatch("integrands must share one nonempty time grid".into()));
        }
        let gram = DMatrix::from_fn(p, p, |a, b| {
            integrands[a].iter().zip(&integrands[b]).map(|(x, y)| x * y).sum::<f64>() / k as f64
        });
        let eig = SymmetricEigen::new(gram);
        let root = DMatrix::from_fn(p, p, |a, c| eig.eigenvectors[(a, c)] * eig.eigenvalues[c].max(0.0).sqrt());
        let mut rng = stream.rng();
        let r = self.rank();
        let xi: DMatrix<f64> = DMatrix::from_fn(r, p, |_, _| StandardNormal.sample(&mut rng));
        let u: DMatrix<f64> = xi * root.transpose();
        let v: DMatrix<f64> = &self.l * u;
        Ok((0..p).map(|a| v.column(a).iter().copied().collect()).collect())
    }
}

/// `W(t_j, x_m)` for `j = 0..=k`, stored row by row in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub k: usize,
    pub x_grid: Vec<f64>,
    pub cov_model: CovModel,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn at(&self, j: usize, m: usize) -> f64 {
        self.values[j * self.x_grid.len() + m]
    }

    /// The path `t_j ↦ W(t_j, x_m)`.
    pub fn mark_path(&self, m: usize) -> Vec<f64> {
        (0..=self.k).map(|j| self.at(j, m)).collect()
    }
}

/// `W(t_j, x) = Σ_{r≤j} G_r(x)/√k` with `G_r` i.i.d. `N(0, Γ)`.
pub fn simulate_mark_field(k: usize, factor: &MarkFactor, stream: &NoiseStream) -> Result<FieldGrid> {
    check_steps(k)?;
    let m = factor.marks();
    let r = factor.rank();
    let mut rng = stream.rng();
    let scale = 1.0 / (k as f64).sqrt();
    let mut values = vec![0.0; (k + 1) * m];
    let mut z = DVector::<f64>::zeros(r);
    for j in 1..=k {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let g = &factor.l * &z;
        for c in 0..m {
            values[j * m + c] = values[(j - 1) * m + c] + g[c] * scale;
        }
    }
    Ok(FieldGrid {
        k,
        x_grid: factor.x_grid.clone(),
        cov_model: factor.model,
        values,
    })
}
