//! Conditional-expectation matrices `Γ[k][j] = E_Q[p_j(X_dt) | X_0 = x_k]`.
//!
//! Each row is the vector of truncated generalized moments of the transition
//! distribution started at one Chebyshev node. Three backends are provided:
//! an analytic truncated-normal recursion for conditionally normal models,
//! Fourier quadrature against a characteristic function, and Monte Carlo
//! with common random numbers across nodes. Rows are computed in parallel;
//! results are identical to sequential evaluation.

mod fourier;
pub(crate) mod mc;
mod truncated;

pub use fourier::{cos_density, gamma_fourier, gauss_legendre, CosDensity, QuadConfig};
pub use mc::{gamma_mc, gamma_mc_with_draws, McDraws};
pub use truncated::{truncated_cheb_moments, TruncatedNormalMoments};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::cheb::ChebDomain;
use crate::error::{invalid, Error, Result};

/// Technique used to build a [`MomentMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentBackend {
    Analytic,
    Fourier,
    MonteCarlo,
}

/// The `(N+1) x (N+1)` matrix of conditional basis expectations: row `k` is
/// the node, column `j` the basis index. Every entry is
/// `E[T_j(Y) 1_{[-1,1]}(Y)]` for some `Y`, hence bounded by 1 in absolute
/// value, and column 0 is a probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatrix {
    /// Row-major storage, `(n + 1)` rows of `(n + 1)` entries.
    pub gamma: Vec<f64>,
    pub n: usize,
    pub domain: ChebDomain,
    pub dt: f64,
    pub backend: MomentBackend,
}

/// Roundoff slack on the `|entry| <= 1` bound.
pub const ENTRY_SLACK: f64 = 1e-9;

impl MomentMatrix {
    pub fn new(
        gamma: Vec<f64>,
        n: usize,
        domain: ChebDomain,
        dt: f64,
        backend: MomentBackend,
    ) -> Result<Self> {
        let m = Self { gamma, n, domain, dt, backend };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.n + 1;
        if self.gamma.len() != w * w {
            return Err(Error::Mismatch(format!(
                "gamma storage has {} entries, expected {}",
                self.gamma.len(),
                w * w
            )));
        }
        for (idx, &g) in self.gamma.iter().enumerate() {
            if !g.is_finite() || g.abs() > 1.0 + ENTRY_SLACK {
                return Err(Error::Numerical(format!(
                    "gamma[{}][{}] = {g} violates |entry| <= 1",
                    idx / w,
                    idx % w
                )));
            }
        }
        for k in 0..w {
            let p = self.gamma[k * w];
            if !(-ENTRY_SLACK..=1.0 + ENTRY_SLACK).contains(&p) {
                return Err(Error::Numerical(format!(
                    "gamma[{k}][0] = {p} is not a probability mass"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.n + 1;
        &self.gamma[k * w..(k + 1) * w]
    }

    /// Nodal conditional expectations of a value function with coefficients
    /// `coeffs`: `out[k] = sum_j Γ[k][j] coeffs[j]`.
    pub fn apply(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n + 1 {
            return Err(Error::Mismatch(format!(
                "coefficient length {} does not match degree {}",
                coeffs.len(),
                self.n
            )));
        }
        Ok((0..=self.n)
            .map(|k| self.row(k).iter().zip(coeffs).map(|(g, c)| g * c).sum())
            .collect())
    }
}

/// One row of the analytic backend: the truncated moments of the normal
/// transition distribution
///
/// `Y ~ N( to_unit(x) + 2 Δt μ / (hi - lo), (2 / (hi - lo))^2 Δt σ^2 )`
///
/// started at `node_x` with per-unit-time drift `drift` and variance `var`.
pub fn gamma_row_normal(
    domain: ChebDomain,
    node_x: f64,
    drift: f64,
    var: f64,
    dt: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be > 0"));
    }
    if !(var > 0.0 && var.is_finite()) {
        return Err(invalid("var", "must be > 0"));
    }
    let scale = 2.0 / domain.width();
    let mean = domain.to_unit(node_x) + scale * drift * dt;
    let sd = scale * (var * dt).sqrt();
    Ok(truncated_cheb_moments(mean, sd, n)?.moments)
}

/// Analytic moment matrix for a conditionally normal log-price with
/// stationary increments: applies [`gamma_row_normal`] at every node.
pub fn gamma_normal(
    domain: ChebDomain,
    n: usize,
    drift: f64,
    var: f64,
    dt: f64,
) -> Result<MomentMatrix> {
    let nodes = domain.nodes(n)?;
    let rows: Vec<Result<Vec<f64>>> = nodes
        .par_iter()
        .map(|&x| gamma_row_normal(domain, x, drift, var, dt, n))
        .collect();
    let mut gamma = Vec::with_capacity((n + 1) * (n + 1));
    for row in rows {
        gamma.extend(row?);
    }
    MomentMatrix::new(gamma, n, domain, dt, MomentBackend::Analytic)
}

/// Cache key identifying one pre-computation exactly. `model` is the
/// canonical JSON of the model spec so that any parameter change misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCacheKey {
    pub model: String,
    pub domain: ChebDomain,
    pub n: usize,
    pub dt: f64,
    pub backend: MomentBackend,
    pub m_pre: Option<usize>,
    pub seed: Option<u64>,
}

impl MomentCacheKey {
    pub fn for_model(
        model: &crate::models::ModelSpec,
        domain: ChebDomain,
        n: usize,
        dt: f64,
        backend: MomentBackend,
        m_pre: Option<usize>,
        seed: Option<u64>,
    ) -> Result<Self> {
        Ok(Self {
            model: serde_json::to_string(model)?,
            domain,
            n,
            dt,
            backend,
            m_pre,
            seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: MomentCacheKey,
    matrix: MomentMatrix,
}

/// Writes `matrix` to a JSON cache file keyed by `key`. JSON float encoding
/// round-trips `f64` exactly, so reloads are bit-identical.
pub fn save_moment_cache(path: &Path, key: &MomentCacheKey, matrix: &MomentMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(
        std::io::BufWriter::new(file),
        &CacheFile { key: key.clone(), matrix: matrix.clone() },
    )?;
    Ok(())
}

/// Loads a cached matrix if the file exists and its key matches exactly.
pub fn load_moment_cache(path: &Path, key: &MomentCacheKey) -> Result<Option<MomentMatrix>> {
    if !path.exists() {
        return Ok(None);
    }
    let file = std::fs::File::open(path)?;
    let cached: CacheFile = serde_json::from_reader(std::io::BufReader::new(file))?;
    if &cached.key == key {
        cached.matrix.validate()?;
        Ok(Some(cached.matrix))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests;
