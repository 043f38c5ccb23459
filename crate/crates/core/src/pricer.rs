//! Dynamic Chebyshev backward induction.
//!
//! The value function at each exercise/monitoring date is stored as a
//! Chebyshev polynomial. One backward step turns the coefficients at
//! `t_{u+1}` into nodal continuation values `D · Σ_j c_j Γ[k][j]` (the
//! per-step discount applied to the pre-computed conditional expectations),
//! then the product rule maps continuation and payoff into the new nodal
//! values: `max` for Bermudan, pass-through for European, knock-out masked
//! for barrier options. The first step from maturity can instead price the
//! one-period European value directly ("smoothing"), so the interpolated
//! function is smooth from the start.

use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::cheb::{ChebDomain, ChebPoly};
use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;
use crate::moments::{gauss_legendre, CosDensity, McDraws, MomentMatrix};
use crate::rng::std_normal;

/// Supported payoff profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    EuropeanCall,
    EuropeanPut,
    BermudanPut,
    BarrierUpOutCall,
}

/// Option contract: strike, optional barrier, maturity and the number of
/// equally spaced exercise (Bermudan) or monitoring (barrier) dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub kind: ProductKind,
    pub strike: f64,
    pub barrier: Option<f64>,
    pub maturity: f64,
    pub n_dates: usize,
}

impl ProductSpec {
    pub fn new(
        kind: ProductKind,
        strike: f64,
        barrier: Option<f64>,
        maturity: f64,
        n_dates: usize,
    ) -> Result<Self> {
        let p = Self { kind, strike, barrier, maturity, n_dates };
        p.validate()?;
        Ok(p)
    }

    /// At-the-money put of the reference experiments: `K = 100`, `T = 1`,
    /// weekly dates.
    pub fn european_put_paper() -> Self {
        Self {
            kind: ProductKind::EuropeanPut,
            strike: 100.0,
            barrier: None,
            maturity: 1.0,
            n_dates: 52,
        }
    }

    pub fn bermudan_put_paper() -> Self {
        Self { kind: ProductKind::BermudanPut, ..Self::european_put_paper() }
    }

    pub fn european_call_paper() -> Self {
        Self { kind: ProductKind::EuropeanCall, ..Self::european_put_paper() }
    }

    /// Up-and-out call with barrier `b` (150 in the diffusion models, 125
    /// for CEV), weekly monitoring.
    pub fn barrier_call_paper(barrier: f64) -> Self {
        Self {
            kind: ProductKind::BarrierUpOutCall,
            strike: 100.0,
            barrier: Some(barrier),
            maturity: 1.0,
            n_dates: 52,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(invalid("strike", "must be > 0"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity", "must be > 0"));
        }
        if self.n_dates == 0 {
            return Err(invalid("n_dates", "need at least one period"));
        }
        match (self.kind, self.barrier) {
            (ProductKind::BarrierUpOutCall, Some(b)) => {
                if !(b > self.strike) {
                    return Err(invalid("barrier", "up-and-out call needs B > K"));
                }
                Ok(())
            }
            (ProductKind::BarrierUpOutCall, None) => {
                Err(invalid("barrier", "barrier product needs a barrier level"))
            }
            (_, Some(_)) => Err(invalid("barrier", "barrier only applies to barrier products")),
            (_, None) => Ok(()),
        }
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.n_dates as f64
    }

    pub fn log_barrier(&self) -> Option<f64> {
        self.barrier.map(f64::ln)
    }

    /// Payoff as a function of the log-price.
    pub fn payoff(&self, x: f64) -> f64 {
        match self.kind {
            ProductKind::EuropeanPut | ProductKind::BermudanPut => (self.strike - x.exp()).max(0.0),
            ProductKind::EuropeanCall => (x.exp() - self.strike).max(0.0),
            ProductKind::BarrierUpOutCall => {
                if x > self.log_barrier().expect("validated") {
                    0.0
                } else {
                    (x.exp() - self.strike).max(0.0)
                }
            }
        }
    }

    pub fn is_put(&self) -> bool {
        matches!(self.kind, ProductKind::EuropeanPut | ProductKind::BermudanPut)
    }

    pub fn has_early_exercise(&self) -> bool {
        matches!(self.kind, ProductKind::BermudanPut)
    }
}

/// Default interpolation domains: `[log 0.2, log 350]` for vanilla and
/// Bermudan products, `[log 10, log B]` for barrier options (the upper
/// truncation at the barrier is what enforces the knock-out in the
/// pre-computed expectations).
pub fn default_domain(product: &ProductSpec) -> Result<ChebDomain> {
    match product.kind {
        ProductKind::BarrierUpOutCall => {
            ChebDomain::new(10f64.ln(), product.log_barrier().expect("validated"))
        }
        _ => ChebDomain::new(0.2f64.ln(), 350f64.ln()),
    }
}

/// One-period pricing backend for the smoothing step
/// `V_{t_{n-1}}(x_k) = f(g(x_k), D · E_Q[g(X_{t_n}) | x_k])`.
pub enum TerminalPricer<'a> {
    /// Closed-form conditional expectations for log-normal increments.
    BlackScholes { sigma: f64, r: f64 },
    /// Quadrature of the payoff against a density recovered from a
    /// characteristic function.
    DensityQuadrature { density: &'a CosDensity },
    /// Sample average over the pre-computation draw set.
    SampleAverage { model: &'a ModelSpec, draws: &'a McDraws },
}

impl TerminalPricer<'_> {
    /// Builds the natural backend for `model`, given the artifacts the
    /// moment backend already produced.
    pub fn for_model<'a>(
        model: &'a ModelSpec,
        density: Option<&'a CosDensity>,
        draws: Option<&'a McDraws>,
    ) -> Result<TerminalPricer<'a>> {
        match model {
            ModelSpec::BlackScholes { sigma, r, .. } => {
                Ok(TerminalPricer::BlackScholes { sigma: *sigma, r: *r })
            }
            ModelSpec::Merton { .. } => density
                .map(|d| TerminalPricer::DensityQuadrature { density: d })
                .ok_or_else(|| {
                    Error::Unsupported("Merton smoothing needs the increment density".into())
                }),
            ModelSpec::Cev { .. } => draws
                .map(|d| TerminalPricer::SampleAverage { model, draws: d })
                .ok_or_else(|| {
                    Error::Unsupported("CEV smoothing needs the pre-computation draws".into())
                }),
        }
    }

    /// `E_Q[g(X_{t_n}) | X_{t_{n-1}} = x]`, undiscounted and untruncated.
    pub fn expected_payoff(&self, product: &ProductSpec, x: f64, dt: f64) -> f64 {
        match self {
            TerminalPricer::BlackScholes { sigma, r } => {
                let s = sigma * dt.sqrt();
                let m = x + (r - 0.5 * sigma * sigma) * dt;
                let k = product.strike.ln();
                match product.kind {
                    ProductKind::EuropeanPut | ProductKind::BermudanPut => {
                        truncated_exp_put(product.strike, k, m, s)
                    }
                    ProductKind::EuropeanCall => truncated_exp_call(product.strike, k, m, s),
                    ProductKind::BarrierUpOutCall => {
                        let b = product.log_barrier().expect("validated");
                        truncated_exp_call_capped(product.strike, k, b, m, s)
                    }
                }
            }
            TerminalPricer::DensityQuadrature { density } => {
                expected_payoff_density(product, x, density)
            }
            TerminalPricer::SampleAverage { model, draws } => {
                let mut acc = 0.0;
                for i in 0..draws.m_pre {
                    let x_end = crate::moments::mc::one_step(model, x, dt, draws, i);
                    if x_end.is_finite() {
                        acc += product.payoff(x_end);
                    } else {
                        // absorbed at zero: exp(x) = 0 in the payoff
                        acc += match product.kind {
                            ProductKind::EuropeanPut | ProductKind::BermudanPut => product.strike,
                            _ => 0.0,
                        };
                    }
                }
                acc / draws.m_pre as f64
            }
        }
    }
}

/// `E[(K - e^X)^+]` for `X ~ N(m, s²)`, `k = ln K`.
fn truncated_exp_put(strike: f64, k: f64, m: f64, s: f64) -> f64 {
    let n = std_normal();
    let d = (k - m) / s;
    strike * n.cdf(d) - (m + 0.5 * s * s).exp() * n.cdf(d - s)
}

/// `E[(e^X - K)^+]`.
fn truncated_exp_call(strike: f64, k: f64, m: f64, s: f64) -> f64 {
    let n = std_normal();
    let d = (m - k) / s;
    (m + 0.5 * s * s).exp() * n.cdf(d + s) - strike * n.cdf(d)
}

/// `E[(e^X - K) 1_{k < X <= b}]` for an up-and-out terminal payoff.
fn truncated_exp_call_capped(strike: f64, k: f64, b: f64, m: f64, s: f64) -> f64 {
    let n = std_normal();
    let exp_part = (m + 0.5 * s * s).exp();
    let hi = (b - m) / s;
    let lo = (k - m) / s;
    exp_part * (n.cdf(hi - s) - n.cdf(lo - s)) - strike * (n.cdf(hi) - n.cdf(lo))
}

/// Quadrature of `g(x + y)` against an increment density, with panels split
/// at the payoff kink, the barrier discontinuity and around the density
/// peak.
fn expected_payoff_density(product: &ProductSpec, x: f64, density: &CosDensity) -> f64 {
    let (a, b) = (density.a, density.b);
    let mut cuts = vec![a, b];
    let peak = 0.5 * (a + b);
    let peak_w = 0.25 * (b - a).min(1.0);
    cuts.push(peak - peak_w);
    cuts.push(peak + peak_w);
    cuts.push(product.strike.ln() - x);
    if let Some(lb) = product.log_barrier() {
        cuts.push(lb - x);
        // contributions above the barrier vanish; cap the integration there
        cuts.retain(|&c| c <= lb - x + 1e-14);
        cuts.push(lb - x);
    }
    cuts.retain(|c| c.is_finite() && *c >= a && *c <= b);
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-14);

    let (gl_x, gl_w) = gauss_legendre(128);
    let mut acc = 0.0;
    for panel in cuts.windows(2) {
        let mid = 0.5 * (panel[0] + panel[1]);
        let half = 0.5 * (panel[1] - panel[0]);
        if half <= 0.0 {
            continue;
        }
        for (&t, &w) in gl_x.iter().zip(&gl_w) {
            let y = mid + half * t;
            acc += w * half * density.eval(y) * product.payoff(x + y);
        }
    }
    acc
}

/// Backward-induction output: one value polynomial per date `t_0..t_n` and
/// one continuation polynomial per date `t_0..t_{n-1}`, all on one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcSolution {
    pub product: ProductSpec,
    pub domain: ChebDomain,
    pub value_polys: Vec<ChebPoly>,
    pub continuation_polys: Vec<ChebPoly>,
    pub r: f64,
    /// Per-step discount factor `e^{-r dt}`.
    pub step_discount: f64,
}

/// Exercise when the payoff beats the continuation value up to this slack
/// (comparing against the value polynomial is ill-conditioned where the two
/// coincide).
pub const EXERCISE_TIE_EPS: f64 = 1e-10;

impl DcSolution {
    pub fn n_dates(&self) -> usize {
        self.product.n_dates
    }

    pub fn dt(&self) -> f64 {
        self.product.dt()
    }

    /// Date of index `u`.
    pub fn time(&self, t_index: usize) -> f64 {
        self.dt() * t_index as f64
    }

    /// Price at date `t_index` and log-price `x`: the interpolant inside the
    /// domain, the product's extension rule outside. Knocked-out states
    /// return 0 at every date.
    pub fn price(&self, t_index: usize, x: f64) -> Result<f64> {
        if t_index >= self.value_polys.len() {
            return Err(Error::OutOfRange(format!("date index {t_index} > n")));
        }
        if let Some(b) = self.product.log_barrier() {
            if x > b {
                return Ok(0.0);
            }
        }
        if self.domain.contains(x) {
            self.value_polys[t_index].eval(x)
        } else {
            self.extension_value(t_index, x)
        }
    }

    /// Continuation value at `t_index < n` (discounted expectation of the
    /// next date's value), extended outside the domain by the value
    /// extension rules.
    pub fn continuation(&self, t_index: usize, x: f64) -> Result<f64> {
        if t_index >= self.continuation_polys.len() {
            return Err(Error::OutOfRange(format!(
                "continuation undefined at terminal date index {t_index}"
            )));
        }
        if let Some(b) = self.product.log_barrier() {
            if x > b {
                return Ok(0.0);
            }
        }
        if self.domain.contains(x) {
            self.continuation_polys[t_index].eval(x)
        } else {
            self.extension_value(t_index, x)
        }
    }

    /// Product-specific closed-form values for points outside the
    /// interpolation domain. Rejects interior points: those belong to the
    /// interpolant.
    pub fn extension_value(&self, t_index: usize, x: f64) -> Result<f64> {
        self.extension_value_at_time(self.time(t_index), x)
    }

    /// Extension value at an arbitrary time `t` (for reporting dates between
    /// exercise dates).
    pub fn extension_value_at_time(&self, t: f64, x: f64) -> Result<f64> {
        if self.domain.contains(x) {
            return Err(Error::OutOfRange(format!(
                "x = {x} lies inside the interpolation domain; use the interpolant"
            )));
        }
        let tau = (self.product.maturity - t).max(0.0);
        Ok(extension_value_at(&self.product, self.r, tau, x, self.domain))
    }

    /// The Bermudan exercise test at `(t_index, x)`: payoff within
    /// [`EXERCISE_TIE_EPS`] of the continuation value and strictly positive.
    /// At maturity the continuation is zero, so any positive payoff
    /// exercises.
    pub fn exercise_now(&self, t_index: usize, x: f64) -> Result<bool> {
        if !self.product.has_early_exercise() && t_index < self.n_dates() {
            return Ok(false);
        }
        let g = self.product.payoff(x);
        if g <= 0.0 {
            return Ok(false);
        }
        if t_index >= self.n_dates() {
            return Ok(true);
        }
        Ok(g >= self.continuation(t_index, x)? - EXERCISE_TIE_EPS)
    }

    /// Log-price delta of the interpolant at an interior point.
    pub fn delta(&self, t_index: usize, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        self.value_polys[t_index].derivative()?.eval(x)
    }

    /// Log-price second derivative of the interpolant at an interior point.
    pub fn gamma_greek(&self, t_index: usize, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        self.value_polys[t_index].derivative()?.derivative()?.eval(x)
    }

    /// Spot delta `∂V/∂S = V_x / S`.
    pub fn delta_spot(&self, t_index: usize, x: f64) -> Result<f64> {
        Ok(self.delta(t_index, x)? / x.exp())
    }

    /// Spot gamma `∂²V/∂S² = (V_xx - V_x) / S²`.
    pub fn gamma_spot(&self, t_index: usize, x: f64) -> Result<f64> {
        let d = self.delta(t_index, x)?;
        let g = self.gamma_greek(t_index, x)?;
        let s = x.exp();
        Ok((g - d) / (s * s))
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if x <= self.domain.lo || x >= self.domain.hi {
            return Err(Error::OutOfRange(format!(
                "derivatives need x strictly inside ({}, {})",
                self.domain.lo, self.domain.hi
            )));
        }
        Ok(())
    }
}

/// Extension rules of the value function outside `[lo, hi]` with remaining
/// life `tau`.
fn extension_value_at(
    product: &ProductSpec,
    r: f64,
    tau: f64,
    x: f64,
    domain: ChebDomain,
) -> f64 {
    match product.kind {
        ProductKind::BermudanPut => {
            if x > domain.hi {
                0.0
            } else {
                // always-exercise region
                product.payoff(x)
            }
        }
        ProductKind::EuropeanPut => {
            if x > domain.hi {
                0.0
            } else {
                product.strike * (-r * tau).exp() - x.exp()
            }
        }
        ProductKind::EuropeanCall => {
            if x < domain.lo {
                0.0
            } else {
                x.exp() - product.strike * (-r * tau).exp()
            }
        }
        ProductKind::BarrierUpOutCall => 0.0,
    }
}

/// Runs the backward induction for `product` over `gamma`, producing value
/// and continuation polynomials at every date. `terminal` replaces the first
/// backward step with the exact one-period European value (smoothing);
/// `None` interpolates the raw payoff instead.
pub fn backward_induction(
    product: &ProductSpec,
    domain: ChebDomain,
    gamma: &MomentMatrix,
    r: f64,
    terminal: Option<&TerminalPricer<'_>>,
) -> Result<DcSolution> {
    let solutions = backward_induction_many(std::slice::from_ref(product), domain, gamma, r, terminal)?;
    Ok(solutions.into_iter().next().expect("one product in, one solution out"))
}

/// Backward induction for several products sharing one domain and one
/// moment matrix (the pre-computation is done once for all of them). All
/// products must share maturity and date count.
pub fn backward_induction_many(
    products: &[ProductSpec],
    domain: ChebDomain,
    gamma: &MomentMatrix,
    r: f64,
    terminal: Option<&TerminalPricer<'_>>,
) -> Result<Vec<DcSolution>> {
    if products.is_empty() {
        return Err(invalid("products", "need at least one product"));
    }
    for p in products {
        p.validate()?;
    }
    let first = &products[0];
    if products
        .iter()
        .any(|p| p.maturity != first.maturity || p.n_dates != first.n_dates)
    {
        return Err(Error::Mismatch(
            "products sharing one moment matrix must share maturity and date count".into(),
        ));
    }
    if gamma.domain != domain {
        return Err(Error::Mismatch("moment matrix was built on a different domain".into()));
    }
    let dt = first.dt();
    if (gamma.dt - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(Error::Mismatch(format!(
            "moment matrix step {} does not match product step {dt}",
            gamma.dt
        )));
    }
    for p in products {
        if let Some(b) = p.log_barrier() {
            if (domain.hi - b).abs() > 1e-9 {
                return Err(Error::Mismatch(
                    "barrier products interpolate on [lo, log B]: domain.hi must equal log B"
                        .into(),
                ));
            }
        }
    }

    let n = gamma.n;
    let nodes = domain.nodes(n)?;
    let discount = (-r * dt).exp();

    products
        .iter()
        .map(|product| {
            induce_single(product, domain, gamma, &nodes, r, discount, terminal)
        })
        .collect()
}

fn induce_single(
    product: &ProductSpec,
    domain: ChebDomain,
    gamma: &MomentMatrix,
    nodes: &[f64],
    r: f64,
    discount: f64,
    terminal: Option<&TerminalPricer<'_>>,
) -> Result<DcSolution> {
    let n_dates = product.n_dates;
    let payoff_nodes: Vec<f64> = nodes.iter().map(|&x| product.payoff(x)).collect();

    let mut value_polys = vec![ChebPoly::interpolate(domain, &payoff_nodes)?; n_dates + 1];
    let mut continuation_polys = Vec::with_capacity(n_dates);

    for u in (0..n_dates).rev() {
        let cont_nodal: Vec<f64> = if u == n_dates - 1 {
            if let Some(t) = terminal {
                nodes
                    .iter()
                    .map(|&x| discount * t.expected_payoff(product, x, product.dt()))
                    .collect()
            } else {
                gamma
                    .apply(&value_polys[u + 1].coeffs)?
                    .into_iter()
                    .map(|e| discount * e)
                    .collect()
            }
        } else {
            gamma
                .apply(&value_polys[u + 1].coeffs)?
                .into_iter()
                .map(|e| discount * e)
                .collect()
        };

        if let Some(node) = cont_nodal.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { date: u, node });
        }

        let value_nodal: Vec<f64> = match product.kind {
            ProductKind::BermudanPut => cont_nodal
                .iter()
                .zip(&payoff_nodes)
                .map(|(&c, &g)| c.max(g))
                .collect(),
            // barrier nodes all satisfy x <= log B, so the knock-out mask is
            // the identity here; the truncation of the moment matrix at the
            // barrier carries the knock-out
            _ => cont_nodal.clone(),
        };

        continuation_polys.push(ChebPoly::interpolate(domain, &cont_nodal)?);
        value_polys[u] = ChebPoly::interpolate(domain, &value_nodal)?;
    }
    continuation_polys.reverse();

    Ok(DcSolution {
        product: product.clone(),
        domain,
        value_polys,
        continuation_polys,
        r,
        step_discount: discount,
    })
}

/// Interpolant of discounted fractional-step continuation values: the value
/// at a date between events, expressed as a polynomial so path evaluation
/// stays closed-form. `gamma_frac` must be built with `dt` equal to the time
/// to the next event; `next_value` is that event's value polynomial.
pub fn fractional_step_poly(
    next_value: &ChebPoly,
    gamma_frac: &MomentMatrix,
    discount: f64,
) -> Result<ChebPoly> {
    let nodal: Vec<f64> = gamma_frac
        .apply(&next_value.coeffs)?
        .into_iter()
        .map(|e| discount * e)
        .collect();
    ChebPoly::interpolate(next_value.domain, &nodal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::gamma_normal;

    fn bs_gamma(domain: ChebDomain, n: usize, dt: f64) -> MomentMatrix {
        let (sigma, r) = (0.25, 0.03);
        gamma_normal(domain, n, r - 0.5 * sigma * sigma, sigma * sigma, dt).unwrap()
    }

    #[test]
    fn payoff_examples() {
        let put = ProductSpec::european_put_paper();
        assert_eq!(put.payoff(100f64.ln()), 0.0);
        assert!((put.payoff(50f64.ln()) - 50.0).abs() < 1e-12);

        let barrier = ProductSpec::barrier_call_paper(150.0);
        assert_eq!(barrier.payoff(160f64.ln()), 0.0);
        assert!((barrier.payoff(120f64.ln()) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn default_domains_match_settings() {
        let berm = default_domain(&ProductSpec::bermudan_put_paper()).unwrap();
        assert!((berm.lo - 0.2f64.ln()).abs() < 1e-15);
        assert!((berm.hi - 350f64.ln()).abs() < 1e-15);

        let b150 = default_domain(&ProductSpec::barrier_call_paper(150.0)).unwrap();
        assert!((b150.lo - 10f64.ln()).abs() < 1e-15);
        assert!((b150.hi - 150f64.ln()).abs() < 1e-15);

        let b125 = default_domain(&ProductSpec::barrier_call_paper(125.0)).unwrap();
        assert!((b125.hi - 125f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn product_validation() {
        assert!(ProductSpec::new(ProductKind::BarrierUpOutCall, 100.0, Some(90.0), 1.0, 52)
            .is_err());
        assert!(ProductSpec::new(ProductKind::BarrierUpOutCall, 100.0, None, 1.0, 52).is_err());
        assert!(ProductSpec::new(ProductKind::EuropeanPut, 100.0, Some(150.0), 1.0, 52).is_err());
        assert!(ProductSpec::new(ProductKind::EuropeanPut, -1.0, None, 1.0, 52).is_err());
    }

    #[test]
    fn smoothing_step_matches_one_week_black_scholes_put() {
        // nodal smoothing value at x = log 100 is the one-week analytic put
        let product = ProductSpec::european_put_paper();
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let dt = 1.0 / 52.0;
        let got = t.expected_payoff(&product, 100f64.ln(), dt);
        let oracle = chebex_oracles::bs_european(
            chebex_oracles::OptionSide::Put,
            100.0,
            100.0,
            0.03,
            0.25,
            dt,
        )
        .unwrap()
        .value;
        // expected_payoff is undiscounted; the oracle discounts the strike
        let discounted = (-0.03 * dt).exp() * got;
        assert!((discounted - oracle).abs() < 1e-12, "{discounted} vs {oracle}");
    }

    #[test]
    fn smoothing_deep_itm_node_takes_payoff() {
        let product = ProductSpec::bermudan_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 40, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        let x = 20f64.ln();
        let v = sol.price(product.n_dates - 1, x).unwrap();
        assert!((v - 80.0).abs() < 1e-6, "deep ITM nodal value {v}");
    }

    #[test]
    fn barrier_above_barrier_is_zero() {
        let product = ProductSpec::barrier_call_paper(150.0);
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 40, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        for u in 0..=product.n_dates {
            assert_eq!(sol.price(u, 150.01f64.ln()).unwrap(), 0.0);
        }
        assert_eq!(sol.price(3, 150f64.ln() + 0.01).unwrap(), 0.0);
    }

    #[test]
    fn extension_rules() {
        let product = ProductSpec::bermudan_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 30, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();

        // deep OTM put above the domain
        assert_eq!(sol.price(10, 400f64.ln()).unwrap(), 0.0);
        // deep ITM put below the domain: immediate exercise value
        let x = 0.1f64.ln();
        assert!((sol.price(10, x).unwrap() - (100.0 - 0.1)).abs() < 1e-12);
        // interior points are rejected by the extension accessor
        assert!(sol.extension_value(10, 100f64.ln()).is_err());

        // European put below the domain carries the forward strike
        let eu = ProductSpec::european_put_paper();
        let sol_eu = backward_induction(&eu, domain, &gamma, 0.03, Some(&t)).unwrap();
        let tau = 1.0 - sol_eu.time(10);
        let want = 100.0 * (-0.03 * tau).exp() - 0.1;
        assert!((sol_eu.price(10, x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn terminal_poly_interpolates_payoff_at_nodes() {
        let product = ProductSpec::european_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 60, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        for &x in &domain.nodes(60).unwrap() {
            let v = sol.price(product.n_dates, x).unwrap();
            assert!((v - product.payoff(x)).abs() < 1e-6 * (1.0 + product.payoff(x)));
        }
    }

    #[test]
    fn bermudan_dominates_payoff_at_nodes() {
        let product = ProductSpec::bermudan_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 80, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        for u in 0..=product.n_dates {
            for &x in &domain.nodes(80).unwrap() {
                let v = sol.price(u, x).unwrap();
                assert!(v >= product.payoff(x) - 1e-8, "date {u}: {v} < payoff");
            }
        }
    }

    #[test]
    fn bermudan_with_single_period_equals_european() {
        let eu = ProductSpec::new(ProductKind::EuropeanPut, 100.0, None, 1.0, 1).unwrap();
        let bm = ProductSpec::new(ProductKind::BermudanPut, 100.0, None, 1.0, 1).unwrap();
        let domain = default_domain(&eu).unwrap();
        let gamma = bs_gamma(domain, 80, 1.0);
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let se = backward_induction(&eu, domain, &gamma, 0.03, Some(&t)).unwrap();
        let sb = backward_induction(&bm, domain, &gamma, 0.03, Some(&t)).unwrap();
        let x0 = 100f64.ln();
        assert!((se.price(0, x0).unwrap() - sb.price(0, x0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_gamma_is_rejected() {
        let product = ProductSpec::european_put_paper();
        let domain = default_domain(&product).unwrap();
        let other = ChebDomain::new(1.0, 2.0).unwrap();
        let gamma = bs_gamma(other, 30, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        assert!(backward_induction(&product, domain, &gamma, 0.03, Some(&t)).is_err());

        let gamma_wrong_dt = bs_gamma(domain, 30, 0.5);
        assert!(backward_induction(&product, domain, &gamma_wrong_dt, 0.03, Some(&t)).is_err());
    }

    #[test]
    fn delta_is_flat_for_deep_otm_put() {
        let product = ProductSpec::european_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 150, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        let d = sol.delta(0, 300f64.ln()).unwrap();
        assert!(d.abs() < 1e-3, "deep OTM delta {d}");
        // boundary points rejected
        assert!(sol.delta(0, domain.hi).is_err());
        assert!(sol.delta(0, domain.lo - 0.1).is_err());
    }

    #[test]
    fn delta_matches_finite_difference_of_price() {
        let product = ProductSpec::bermudan_put_paper();
        let domain = default_domain(&product).unwrap();
        let gamma = bs_gamma(domain, 150, product.dt());
        let t = TerminalPricer::BlackScholes { sigma: 0.25, r: 0.03 };
        let sol = backward_induction(&product, domain, &gamma, 0.03, Some(&t)).unwrap();
        let h = 1e-5;
        for &x in &[80f64.ln(), 100f64.ln(), 140f64.ln()] {
            let fd =
                (sol.price(0, x + h).unwrap() - sol.price(0, x - h).unwrap()) / (2.0 * h);
            let d = sol.delta(0, x).unwrap();
            assert!((fd - d).abs() < 1e-6, "x={x}: {fd} vs {d}");
        }
    }
}
