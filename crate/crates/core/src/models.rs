//! Asset models: parameter sets, risk-neutral conditional distributions,
//! the Merton characteristic function and real-world path simulation.
//!
//! Log-returns `X_t = log(S_t / 1)` are the risk factor throughout; paths
//! store log-prices. Simulation is parallel across paths with per-path RNG
//! substreams keyed by `(seed, path index)`, so results do not depend on
//! thread scheduling.

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Measure under which paths are simulated: real-world scenarios (`P`) or
/// the pricing measure (`Q`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    P,
    Q,
}

/// Tagged model parameter set. Rates and drifts are per year, volatilities
/// per square-root year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ModelSpec {
    BlackScholes {
        sigma: f64,
        mu_p: f64,
        r: f64,
    },
    Merton {
        sigma: f64,
        mu_p: f64,
        r: f64,
        /// Jump arrival intensity `lambda >= 0`.
        jump_intensity: f64,
        /// Mean of the normal log jump size.
        jump_mean: f64,
        /// Standard deviation of the log jump size, `>= 0`.
        jump_std: f64,
    },
    Cev {
        sigma: f64,
        mu_p: f64,
        r: f64,
        /// Elasticity exponent `beta > 0`; `beta = 2` recovers Black-Scholes.
        cev_exponent: f64,
    },
}

impl ModelSpec {
    /// Black-Scholes with the parameters of the reference experiments:
    /// `sigma = 0.25`, `mu = 0.1`, `r = 0.03`.
    pub fn paper_black_scholes() -> Self {
        ModelSpec::BlackScholes { sigma: 0.25, mu_p: 0.1, r: 0.03 }
    }

    /// Merton jump diffusion: `sigma = 0.25`, jumps `N(-0.5, 0.4^2)` at rate
    /// `lambda = 0.4`, `mu = 0.1`, `r = 0.03`.
    pub fn paper_merton() -> Self {
        ModelSpec::Merton {
            sigma: 0.25,
            mu_p: 0.1,
            r: 0.03,
            jump_intensity: 0.4,
            jump_mean: -0.5,
            jump_std: 0.4,
        }
    }

    /// CEV local volatility: `sigma = 0.3`, `beta = 1.5`, `mu = 0.1`,
    /// `r = 0.03`.
    pub fn paper_cev() -> Self {
        ModelSpec::Cev { sigma: 0.3, mu_p: 0.1, r: 0.03, cev_exponent: 1.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid(name, reason.to_string()))
            }
        };
        match *self {
            ModelSpec::BlackScholes { sigma, mu_p, r } => {
                check(sigma > 0.0 && sigma.is_finite(), "sigma", "must be > 0")?;
                check(mu_p.is_finite() && r.is_finite(), "drift", "must be finite")
            }
            ModelSpec::Merton { sigma, mu_p, r, jump_intensity, jump_mean, jump_std } => {
                check(sigma > 0.0 && sigma.is_finite(), "sigma", "must be > 0")?;
                check(jump_intensity >= 0.0, "jump_intensity", "must be >= 0")?;
                check(jump_std >= 0.0, "jump_std", "must be >= 0")?;
                check(
                    mu_p.is_finite() && r.is_finite() && jump_mean.is_finite(),
                    "drift",
                    "must be finite",
                )
            }
            ModelSpec::Cev { sigma, mu_p, r, cev_exponent } => {
                check(sigma > 0.0 && sigma.is_finite(), "sigma", "must be > 0")?;
                check(cev_exponent > 0.0, "cev_exponent", "must be > 0")?;
                check(mu_p.is_finite() && r.is_finite(), "drift", "must be finite")
            }
        }
    }

    pub fn r(&self) -> f64 {
        match *self {
            ModelSpec::BlackScholes { r, .. }
            | ModelSpec::Merton { r, .. }
            | ModelSpec::Cev { r, .. } => r,
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            ModelSpec::BlackScholes { sigma, .. }
            | ModelSpec::Merton { sigma, .. }
            | ModelSpec::Cev { sigma, .. } => sigma,
        }
    }

    fn growth_rate(&self, measure: Measure) -> f64 {
        match measure {
            Measure::P => match *self {
                ModelSpec::BlackScholes { mu_p, .. }
                | ModelSpec::Merton { mu_p, .. }
                | ModelSpec::Cev { mu_p, .. } => mu_p,
            },
            Measure::Q => self.r(),
        }
    }

    /// Expected relative jump size `kappa = E[e^J] - 1` of the Merton model,
    /// zero elsewhere.
    pub fn jump_compensator(&self) -> f64 {
        match *self {
            ModelSpec::Merton { jump_mean, jump_std, .. } => {
                (jump_mean + 0.5 * jump_std * jump_std).exp() - 1.0
            }
            _ => 0.0,
        }
    }

    /// Characteristic function of the Merton log-return over horizon `t`
    /// under the pricing measure:
    ///
    /// `phi(z) = exp(t (i b z - sigma^2 z^2 / 2 + lambda (e^{i z a - b_j^2 z^2 / 2} - 1)))`
    ///
    /// with risk-neutral drift `b = r - sigma^2/2 - lambda (e^{a + b_j^2/2} - 1)`.
    pub fn merton_cf(&self, z: Complex64, t: f64) -> Result<Complex64> {
        match *self {
            ModelSpec::Merton { sigma, r, jump_intensity, jump_mean, jump_std, .. } => {
                let b = r - 0.5 * sigma * sigma - jump_intensity * self.jump_compensator();
                let i = Complex64::i();
                let jump = (i * z * jump_mean - 0.5 * jump_std * jump_std * z * z).exp() - 1.0;
                let exponent =
                    t * (i * b * z - 0.5 * sigma * sigma * z * z + jump_intensity * jump);
                Ok(exponent.exp())
            }
            _ => Err(Error::Unsupported(
                "characteristic function is only defined for the Merton model".into(),
            )),
        }
    }

    /// First, second and fourth cumulants of the log-return over horizon `t`
    /// under the pricing measure, used to size Fourier truncation intervals.
    pub fn log_return_cumulants(&self, t: f64) -> Result<(f64, f64, f64)> {
        match *self {
            ModelSpec::BlackScholes { sigma, r, .. } => {
                Ok(((r - 0.5 * sigma * sigma) * t, sigma * sigma * t, 0.0))
            }
            ModelSpec::Merton { sigma, r, jump_intensity, jump_mean, jump_std, .. } => {
                let b = r - 0.5 * sigma * sigma - jump_intensity * self.jump_compensator();
                let a = jump_mean;
                let s2 = jump_std * jump_std;
                let c1 = (b + jump_intensity * a) * t;
                let c2 = (sigma * sigma + jump_intensity * (a * a + s2)) * t;
                // E[J^4] for J ~ N(a, s2)
                let j4 = a.powi(4) + 6.0 * a * a * s2 + 3.0 * s2 * s2;
                let c4 = jump_intensity * j4 * t;
                Ok((c1, c2, c4))
            }
            ModelSpec::Cev { .. } => Err(Error::Unsupported(
                "CEV has no closed-form log-return cumulants".into(),
            )),
        }
    }

    /// Mean shift and variance of the conditionally normal log-price
    /// increment over `dt` under the pricing measure. Exact for
    /// Black-Scholes; other models are rejected.
    pub fn conditional_normal_params(&self, dt: f64) -> Result<(f64, f64)> {
        match *self {
            ModelSpec::BlackScholes { sigma, r, .. } => {
                Ok(((r - 0.5 * sigma * sigma) * dt, sigma * sigma * dt))
            }
            _ => Err(Error::Unsupported(
                "conditionally normal increments are only available for Black-Scholes".into(),
            )),
        }
    }
}

/// Simulated log-price paths on a time grid: row `i` is path `i`,
/// column `u` the value at `grid[u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// Row-major `M x (n+1)` matrix of log-prices.
    pub values: Vec<f64>,
    pub n_paths: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl PathSet {
    #[inline]
    pub fn at(&self, path: usize, date: usize) -> f64 {
        self.values[path * self.grid.len() + date]
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[path * w..(path + 1) * w]
    }

    /// Exact binary round-trip format: header (magic, counts, seed), grid,
    /// then the row-major value matrix, all little-endian.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"CHEBPATH")?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for t in &self.grid {
            w.write_all(&t.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"CHEBPATH" {
            return Err(Error::Numerical("bad path file magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n_paths = read_u64(&mut r)? as usize;
        let n_dates = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let read_f64 = |r: &mut dyn Read| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut grid = Vec::with_capacity(n_dates);
        for _ in 0..n_dates {
            grid.push(read_f64(&mut r)?);
        }
        let mut values = Vec::with_capacity(n_paths * n_dates);
        for _ in 0..n_paths * n_dates {
            values.push(read_f64(&mut r)?);
        }
        Ok(PathSet { values, n_paths, grid, seed })
    }

    /// Debug CSV: header row of grid dates, one row per path.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = self.grid.iter().map(|t| format!("{t:.10e}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n_paths {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Number of Euler substeps per grid interval for the CEV scheme.
pub const CEV_SUBSTEPS: usize = 8;

/// Log-price floor used when a CEV path is absorbed at zero; keeps stored
/// paths finite while staying far below any interpolation domain.
pub const LOG_FLOOR: f64 = -690.0;

/// Simulates `m` log-price paths started at `x0` on `grid` (which must
/// begin at 0 and increase). Black-Scholes uses exact log-normal
/// increments, Merton compound-Poisson jump diffusion increments, CEV a
/// full-truncation Euler scheme in the price variable. Deterministic given
/// `seed`.
pub fn simulate_paths(
    spec: &ModelSpec,
    measure: Measure,
    x0: f64,
    grid: &[f64],
    m: usize,
    seed: u64,
) -> Result<PathSet> {
    spec.validate()?;
    if m == 0 {
        return Err(invalid("paths", "need at least one path"));
    }
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(invalid("grid", "grid must start at t = 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "grid must be strictly increasing"));
    }
    if !x0.is_finite() {
        return Err(invalid("x0", "must be finite"));
    }

    let width = grid.len();
    let mut values = vec![0.0; m * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = rng::substream(seed, path as u64);
            row[0] = x0;
            match *spec {
                ModelSpec::BlackScholes { sigma, .. } => {
                    let g = spec.growth_rate(measure);
                    let drift = g - 0.5 * sigma * sigma;
                    let mut x = x0;
                    for u in 1..width {
                        let dt = grid[u] - grid[u - 1];
                        x += drift * dt + sigma * dt.sqrt() * rng::standard_normal(&mut rng);
                        row[u] = x;
                    }
                }
                ModelSpec::Merton { sigma, jump_intensity, jump_mean, jump_std, .. } => {
                    let g = spec.growth_rate(measure);
                    let drift = g - 0.5 * sigma * sigma - jump_intensity * spec.jump_compensator();
                    let mut x = x0;
                    for u in 1..width {
                        let dt = grid[u] - grid[u - 1];
                        let jumps = poisson_inverse_cdf(jump_intensity * dt, &mut rng);
                        let k = jumps as f64;
                        // diffusion and the normal sum of k jump sizes merged
                        // into a single conditional normal draw
                        let var = sigma * sigma * dt + k * jump_std * jump_std;
                        x += drift * dt
                            + k * jump_mean
                            + var.sqrt() * rng::standard_normal(&mut rng);
                        row[u] = x;
                    }
                }
                ModelSpec::Cev { sigma, cev_exponent, .. } => {
                    let g = spec.growth_rate(measure);
                    let half_beta = 0.5 * cev_exponent;
                    let mut s = x0.exp();
                    for u in 1..width {
                        let h = (grid[u] - grid[u - 1]) / CEV_SUBSTEPS as f64;
                        let sqrt_h = h.sqrt();
                        for _ in 0..CEV_SUBSTEPS {
                            let s_pos = s.max(0.0);
                            s += g * s_pos * h
                                + sigma
                                    * s_pos.powf(half_beta)
                                    * sqrt_h
                                    * rng::standard_normal(&mut rng);
                        }
                        s = s.max(0.0);
                        row[u] = if s > 0.0 { s.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
                    }
                }
            }
        });

    Ok(PathSet { values, n_paths: m, grid: grid.to_vec(), seed })
}

/// Poisson draw by CDF inversion; one uniform per draw, exact for the small
/// intensities used per time step.
fn poisson_inverse_cdf(mean: f64, rng: &mut impl RngCore) -> u32 {
    debug_assert!(mean >= 0.0);
    if mean == 0.0 {
        return 0;
    }
    let u = rng::uniform_open(rng);
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 1_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}
