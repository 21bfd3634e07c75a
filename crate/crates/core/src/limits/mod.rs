//! Samplers for the limit objects: stable paths `S`, fractional Brownian
//! motion `Z_θ`, the mark field `W(t, x)`, and functionals built from
//! forward Riemann sums.

pub mod ensemble;
pub mod fbm;
pub mod field;
pub mod integrals;
pub mod paths;

pub use ensemble::{limit_sup_statistic, LimitEnsemble, LimitKind, LimitParams, LimitSampler, PathSource};
pub use fbm::{simulate_fbm, FbmSampler};
pub use field::{simulate_mark_field, CovModel, FieldGrid, MarkFactor};
pub use integrals::{limit_lse_error, limit_quantile_error, stochastic_integral};
pub use paths::{simulate_stable_path, PathGrid};
