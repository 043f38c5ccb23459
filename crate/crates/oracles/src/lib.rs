//! Independent reference implementations for validating the dynamic
//! Chebyshev engine: closed-form and series pricers, a binomial tree with
//! restricted exercise dates, adaptive quadrature for truncated moments and
//! a desk-scale nested Monte Carlo exposure calculator.
//!
//! Nothing here calls into the interpolation, moment or backward-induction
//! code paths of `chebex`; only the model definitions, path simulator and
//! product descriptions are shared.

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use chebex::models::{simulate_paths, Measure, ModelSpec};
use chebex::pricer::{ProductKind, ProductSpec};

/// Call or put side of a vanilla payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionSide {
    Call,
    Put,
}

/// Value plus the standard error of the estimate (zero for deterministic
/// oracles).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub std_error: f64,
    pub method: &'static str,
}

#[derive(Debug)]
pub struct OracleError(pub String);

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "oracle error: {}", self.0)
    }
}

impl std::error::Error for OracleError {}

type Result<T> = std::result::Result<T, OracleError>;

fn norm() -> Normal {
    Normal::standard()
}

/// Black-Scholes closed form. Put-call parity `C - P = S - K e^{-r tau}`
/// holds to machine precision.
pub fn bs_european(
    side: OptionSide,
    s: f64,
    k: f64,
    r: f64,
    sigma: f64,
    tau: f64,
) -> Result<OracleResult> {
    if !(s > 0.0 && k > 0.0 && sigma > 0.0 && tau > 0.0) {
        return Err(OracleError(format!(
            "need S, K, sigma, tau > 0; got S={s}, K={k}, sigma={sigma}, tau={tau}"
        )));
    }
    let st = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / st;
    let d2 = d1 - st;
    let n = norm();
    let df = (-r * tau).exp();
    let value = match side {
        OptionSide::Call => s * n.cdf(d1) - k * df * n.cdf(d2),
        OptionSide::Put => k * df * n.cdf(-d2) - s * n.cdf(-d1),
    };
    Ok(OracleResult { value, std_error: 0.0, method: "black_scholes_closed_form" })
}

/// Black-Scholes spot delta.
pub fn bs_delta(side: OptionSide, s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    let st = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / st;
    match side {
        OptionSide::Call => norm().cdf(d1),
        OptionSide::Put => norm().cdf(d1) - 1.0,
    }
}

/// Merton jump-diffusion European price by conditioning on the jump count:
/// a Poisson-weighted sum of log-normal expectations with jump-adjusted
/// mean and variance. Converged when the remaining Poisson tail weight
/// bounds the truncation error below 1e-12.
pub fn merton_european_series(
    side: OptionSide,
    s: f64,
    k: f64,
    spec: &ModelSpec,
    tau: f64,
    n_terms: usize,
) -> Result<OracleResult> {
    let (sigma, r, lambda, alpha, beta) = match *spec {
        ModelSpec::Merton { sigma, r, jump_intensity, jump_mean, jump_std, .. } => {
            (sigma, r, jump_intensity, jump_mean, jump_std)
        }
        _ => return Err(OracleError("series oracle needs a Merton model".into())),
    };
    if n_terms == 0 {
        return Err(OracleError("need at least one series term".into()));
    }
    let kappa = (alpha + 0.5 * beta * beta).exp() - 1.0;
    let b = r - 0.5 * sigma * sigma - lambda * kappa;
    let df = (-r * tau).exp();
    let n = norm();

    let mut weight = (-lambda * tau).exp();
    let mut acc = 0.0;
    let mut tail = 1.0; // remaining Poisson mass
    for m in 0..n_terms {
        if m > 0 {
            weight *= lambda * tau / m as f64;
        }
        tail -= weight;
        let mf = m as f64;
        let mean = s.ln() + b * tau + mf * alpha;
        let var = sigma * sigma * tau + mf * beta * beta;
        let sd = var.sqrt();
        // E[(e^X - K)^+] for X ~ N(mean, var), then discounted
        let d2 = (mean - k.ln()) / sd;
        let d1 = d2 + sd;
        let fwd = (mean + 0.5 * var).exp();
        let call = fwd * n.cdf(d1) - k * n.cdf(d2);
        let undiscounted = match side {
            OptionSide::Call => call,
            // parity on the conditional expectation
            OptionSide::Put => call - fwd + k,
        };
        acc += weight * undiscounted;
        // tail weight times a payoff bound dominates the truncation error
        if tail * (k + fwd) < 1e-12 {
            break;
        }
    }
    Ok(OracleResult { value: df * acc, std_error: 0.0, method: "merton_poisson_series" })
}

/// Cox-Ross-Rubinstein tree price of a put exercisable only at the given
/// dates (fractions of `maturity`, maturity itself always included).
/// `tree_steps` must place every exercise date on a tree level.
pub fn crr_bermudan_put(
    s: f64,
    k: f64,
    r: f64,
    sigma: f64,
    maturity: f64,
    exercise_dates: &[f64],
    tree_steps: usize,
) -> Result<OracleResult> {
    if tree_steps == 0 {
        return Err(OracleError("need at least one tree step".into()));
    }
    let dt = maturity / tree_steps as f64;
    let mut exercise_step = vec![false; tree_steps + 1];
    exercise_step[tree_steps] = true;
    for &t in exercise_dates {
        let step = t / dt;
        if (step - step.round()).abs() > 1e-9 {
            return Err(OracleError(format!(
                "exercise date {t} does not align with the {tree_steps}-step tree"
            )));
        }
        exercise_step[step.round() as usize] = true;
    }

    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let disc = (-r * dt).exp();
    let p = ((r * dt).exp() - d) / (u - d);
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError(format!("risk-neutral probability {p} outside [0, 1]")));
    }

    // level `tree_steps`: node j has price s * u^(2j - steps)
    let mut values: Vec<f64> = (0..=tree_steps)
        .map(|j| {
            let sj = s * u.powi(2 * j as i32 - tree_steps as i32);
            (k - sj).max(0.0)
        })
        .collect();

    for step in (0..tree_steps).rev() {
        for j in 0..=step {
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = if exercise_step[step] {
                let sj = s * u.powi(2 * j as i32 - step as i32);
                cont.max(k - sj)
            } else {
                cont
            };
        }
        values.truncate(step + 1);
    }
    Ok(OracleResult { value: values[0], std_error: 0.0, method: "crr_bermudan_tree" })
}

/// Adaptive-quadrature truncated moments `∫_{-1}^{1} T_j(y) φ_{μ,σ}(y) dy`,
/// `j = 0..=n`. Each integral is split into at least `j + 4` panels before
/// refinement so the oscillation of `T_j` cannot alias the error estimate.
pub fn moments_quadrature(mu: f64, sigma: f64, n: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(OracleError("sigma must be > 0".into()));
    }
    let dist = Normal::new(mu, sigma).map_err(|e| OracleError(e.to_string()))?;
    Ok((0..=n)
        .map(|j| {
            let f = |y: f64| (j as f64 * y.acos()).cos() * dist.pdf(y);
            let panels = (j + 4).max(8);
            let mut acc = 0.0;
            for p in 0..panels {
                let a = -1.0 + 2.0 * p as f64 / panels as f64;
                let b = -1.0 + 2.0 * (p + 1) as f64 / panels as f64;
                acc += adaptive_simpson(&f, a, b, 1e-13 / panels as f64);
            }
            acc
        })
        .collect())
}

/// Adaptive Simpson quadrature with forced initial refinement; general
/// helper for one-off reference integrals in tests.
pub fn adaptive_quadrature(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson(f, a, b, tol)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, fa, b, fb, m, fm, whole, tol, 4, 45)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    min_depth: i32,
    max_depth: i32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if max_depth <= 0 || (min_depth <= 0 && delta.abs() <= 15.0 * tol) {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, min_depth - 1, max_depth - 1)
            + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, min_depth - 1, max_depth - 1)
    }
}

/// Configuration of the nested Monte Carlo exposure oracle.
#[derive(Debug, Clone)]
pub struct NestedMcConfig {
    pub m_outer: usize,
    pub seed: u64,
    pub s0: f64,
    /// Tree levels per remaining exercise period for Bermudan inner pricing.
    pub tree_steps_per_period: usize,
    pub series_terms: usize,
}

impl Default for NestedMcConfig {
    fn default() -> Self {
        Self { m_outer: 200, seed: 424242, s0: 100.0, tree_steps_per_period: 16, series_terms: 80 }
    }
}

/// Expected-exposure profile with per-date standard errors.
#[derive(Debug, Clone)]
pub struct NestedMcProfile {
    pub times: Vec<f64>,
    pub ee: Vec<f64>,
    pub se: Vec<f64>,
    pub price_t0: f64,
}

/// Brute-force exposure calculation: simulate real-world scenarios and
/// reprice the remaining option at every date with an independent pricer
/// (closed form for European Black-Scholes, Poisson series for Merton,
/// restricted-exercise tree for Bermudan Black-Scholes). Desk-scale only.
pub fn nested_mc_exposure(
    product: &ProductSpec,
    model: &ModelSpec,
    cfg: &NestedMcConfig,
) -> Result<NestedMcProfile> {
    if cfg.m_outer == 0 || cfg.m_outer > 500 {
        return Err(OracleError("outer path count must be in 1..=500".into()));
    }
    let supported = matches!(
        (model, product.kind),
        (ModelSpec::BlackScholes { .. }, ProductKind::EuropeanPut)
            | (ModelSpec::BlackScholes { .. }, ProductKind::EuropeanCall)
            | (ModelSpec::BlackScholes { .. }, ProductKind::BermudanPut)
            | (ModelSpec::Merton { .. }, ProductKind::EuropeanPut)
            | (ModelSpec::Merton { .. }, ProductKind::EuropeanCall)
    );
    if !supported {
        return Err(OracleError(format!(
            "no cheap inner pricer for {:?} under {:?}",
            product.kind, model
        )));
    }

    let n = product.n_dates;
    let t_grid: Vec<f64> = (0..=n).map(|u| product.maturity * u as f64 / n as f64).collect();
    let paths = simulate_paths(model, Measure::P, cfg.s0.ln(), &t_grid, cfg.m_outer, cfg.seed)
        .map_err(|e| OracleError(e.to_string()))?;

    let inner_price = |u: usize, x: f64| -> Result<f64> {
        let tau = product.maturity - t_grid[u];
        let s = x.exp();
        match (model, product.kind) {
            (ModelSpec::BlackScholes { sigma, r, .. }, ProductKind::EuropeanPut) => {
                if u == n {
                    Ok(product.payoff(x))
                } else {
                    Ok(bs_european(OptionSide::Put, s, product.strike, *r, *sigma, tau)?.value)
                }
            }
            (ModelSpec::BlackScholes { sigma, r, .. }, ProductKind::EuropeanCall) => {
                if u == n {
                    Ok(product.payoff(x))
                } else {
                    Ok(bs_european(OptionSide::Call, s, product.strike, *r, *sigma, tau)?.value)
                }
            }
            (ModelSpec::Merton { .. }, _) => {
                if u == n {
                    Ok(product.payoff(x))
                } else {
                    let side = if product.is_put() { OptionSide::Put } else { OptionSide::Call };
                    Ok(merton_european_series(
                        side,
                        s,
                        product.strike,
                        model,
                        tau,
                        cfg.series_terms,
                    )?
                    .value)
                }
            }
            _ => unreachable!("guarded above"),
        }
    };

    let rows: Vec<Result<Vec<f64>>> = (0..cfg.m_outer)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut row = vec![0.0; n + 1];
            match (model, product.kind) {
                (ModelSpec::BlackScholes { sigma, r, .. }, ProductKind::BermudanPut) => {
                    let mut dead = false;
                    for u in 0..=n {
                        if dead {
                            break;
                        }
                        let x = paths.at(i, u);
                        let g = product.payoff(x);
                        let cont = if u == n {
                            0.0
                        } else {
                            // option exercisable at the remaining dates only
                            let tau = product.maturity - t_grid[u];
                            let periods = n - u;
                            let dates: Vec<f64> = (1..=periods)
                                .map(|j| tau * j as f64 / periods as f64)
                                .collect();
                            crr_bermudan_put(
                                x.exp(),
                                product.strike,
                                *r,
                                *sigma,
                                tau,
                                &dates,
                                cfg.tree_steps_per_period * periods,
                            )?
                            .value
                        };
                        if g > 0.0 && g >= cont {
                            row[u] = g;
                            dead = true;
                        } else {
                            row[u] = cont.max(g).max(0.0);
                        }
                    }
                }
                _ => {
                    for u in 0..=n {
                        row[u] = inner_price(u, paths.at(i, u))?.max(0.0);
                    }
                }
            }
            Ok(row)
        })
        .collect();

    let mut ee = vec![0.0; n + 1];
    let mut m2 = vec![0.0; n + 1];
    let mut collected = Vec::with_capacity(cfg.m_outer);
    for row in rows {
        collected.push(row?);
    }
    for row in &collected {
        for (u, &e) in row.iter().enumerate() {
            ee[u] += e;
            m2[u] += e * e;
        }
    }
    let mf = cfg.m_outer as f64;
    let mut se = vec![0.0; n + 1];
    for u in 0..=n {
        ee[u] /= mf;
        let var = (m2[u] / mf - ee[u] * ee[u]).max(0.0);
        se[u] = (var / mf).sqrt();
    }

    let price_t0 = match (model, product.kind) {
        (ModelSpec::BlackScholes { sigma, r, .. }, ProductKind::BermudanPut) => {
            let dates: Vec<f64> = (1..=n).map(|j| product.maturity * j as f64 / n as f64).collect();
            let tree = crr_bermudan_put(
                cfg.s0,
                product.strike,
                *r,
                *sigma,
                product.maturity,
                &dates,
                cfg.tree_steps_per_period * n,
            )?
            .value;
            tree.max(product.payoff(cfg.s0.ln()))
        }
        _ => inner_price(0, cfg.s0.ln())?,
    };

    Ok(NestedMcProfile { times: t_grid, ee, se, price_t0 })
}
