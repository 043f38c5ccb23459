//! Exposure engine: evaluates a backward-induction solution along
//! real-world paths, applies exercise/knock-out zeroing, and aggregates the
//! expected exposure (EE) and potential future exposure (PFE) per date.
//!
//! The run is organised in the three phases whose wall-clock durations are
//! reported alongside the profile: simulation (path generation under the
//! real-world measure), pre-computation (conditional basis expectations),
//! and time-stepping (backward induction, path pricing, aggregation). The
//! pre-computation cost is independent of the number of simulated paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use crate::cheb::{basis_row, ChebDomain, ChebPoly};
use crate::error::{invalid, Error, Result};
use crate::grid::{ExposureGrid, TimeGrid};
use crate::models::{simulate_paths, Measure, ModelSpec, PathSet};
use crate::moments::{
    cos_density, gamma_fourier, gamma_mc_with_draws, gamma_normal, CosDensity, McDraws,
    MomentBackend, MomentMatrix, QuadConfig,
};
use crate::pricer::{
    backward_induction_many, default_domain, fractional_step_poly, DcSolution, ProductKind,
    ProductSpec, TerminalPricer, EXERCISE_TIE_EPS,
};

/// Per-path, per-reporting-date exposures and liveness flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMatrix {
    /// Row-major `M x n_dates` nonnegative exposures.
    pub exposures: Vec<f64>,
    /// `false` once the option has been exercised or knocked out.
    pub alive: Vec<bool>,
    pub n_paths: usize,
    pub n_dates: usize,
}

impl ExposureMatrix {
    #[inline]
    pub fn at(&self, path: usize, date: usize) -> f64 {
        self.exposures[path * self.n_dates + date]
    }

    #[inline]
    pub fn alive_at(&self, path: usize, date: usize) -> bool {
        self.alive[path * self.n_dates + date]
    }
}

/// Arithmetic mean of exposures per date, in fixed path order.
pub fn expected_exposure(em: &ExposureMatrix) -> Vec<f64> {
    let mut ee = vec![0.0; em.n_dates];
    for path in 0..em.n_paths {
        let row = &em.exposures[path * em.n_dates..(path + 1) * em.n_dates];
        for (acc, &e) in ee.iter_mut().zip(row) {
            *acc += e;
        }
    }
    let inv = 1.0 / em.n_paths as f64;
    for acc in ee.iter_mut() {
        *acc *= inv;
    }
    ee
}

/// Empirical potential future exposure per date: the `ceil(alpha M)`-th
/// smallest exposure, the exact infimum of the defining display.
pub fn pfe(em: &ExposureMatrix, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "quantile level must lie in (0, 1]"));
    }
    let rank = (alpha * em.n_paths as f64).ceil() as usize;
    let rank = rank.clamp(1, em.n_paths);
    let mut out = vec![0.0; em.n_dates];
    let mut column = vec![0.0; em.n_paths];
    for (u, slot) in out.iter_mut().enumerate() {
        for path in 0..em.n_paths {
            column[path] = em.at(path, u);
        }
        let (_, kth, _) = column.select_nth_unstable_by(rank - 1, |a, b| {
            a.partial_cmp(b).expect("exposures are finite")
        });
        *slot = *kth;
    }
    Ok(out)
}

/// Exposure profile of one trade: per-date EE and PFE plus the time-zero
/// price and run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureProfile {
    pub times: Vec<f64>,
    pub ee: Vec<f64>,
    pub pfe: Vec<f64>,
    pub alpha: f64,
    pub price_t0: f64,
    pub m_paths: usize,
    pub seed: u64,
}

impl ExposureProfile {
    /// CSV with one row per date and 10 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,EE,PFE")?;
        for ((t, ee), pfe) in self.times.iter().zip(&self.ee).zip(&self.pfe) {
            writeln!(w, "{t:.9e},{ee:.9e},{pfe:.9e}")?;
        }
        Ok(())
    }
}

/// Wall-clock durations of the run phases, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PhaseTimings {
    pub simulation: f64,
    pub precompute: f64,
    pub time_stepping: f64,
    pub total: f64,
}

/// Numerical settings of an exposure run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    /// Interpolation degree; `None` uses 150 (40 for barrier products).
    pub degree: Option<usize>,
    /// Interpolation domain; `None` uses the product default.
    pub domain: Option<ChebDomain>,
    /// Moment backend; `None` picks the model's natural one.
    pub backend: Option<MomentBackend>,
    /// Monte Carlo pre-computation sample count.
    pub m_pre: usize,
    pub m_paths: usize,
    pub seed: u64,
    pub s0: f64,
    pub alpha: f64,
    pub grid: ExposureGrid,
    pub smoothing: bool,
    pub quad: QuadConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            degree: None,
            domain: None,
            backend: None,
            m_pre: 100_000,
            m_paths: 50_000,
            seed: 1,
            s0: 100.0,
            alpha: 0.975,
            grid: ExposureGrid::Exercise,
            smoothing: true,
            quad: QuadConfig::default(),
        }
    }
}

impl RunSettings {
    pub fn degree_for(&self, product: &ProductSpec) -> usize {
        self.degree.unwrap_or(match product.kind {
            ProductKind::BarrierUpOutCall => 40,
            _ => 150,
        })
    }

    pub fn backend_for(&self, model: &ModelSpec) -> MomentBackend {
        self.backend.unwrap_or(match model {
            ModelSpec::BlackScholes { .. } => MomentBackend::Analytic,
            ModelSpec::Merton { .. } => MomentBackend::Fourier,
            ModelSpec::Cev { .. } => MomentBackend::MonteCarlo,
        })
    }
}

/// Seed offset separating pre-computation substreams from scenario
/// substreams.
fn precompute_seed(seed: u64) -> u64 {
    seed ^ 0xC3A5_C85C_97CB_3127
}

/// Pre-computation products: moment matrix plus whatever artifact the
/// smoothing step reuses.
pub struct Precompute {
    pub gamma: MomentMatrix,
    pub density: Option<CosDensity>,
    pub draws: Option<McDraws>,
}

/// Builds the moment matrix (and smoothing artifacts) for `model` on
/// `domain` with step `dt`.
pub fn precompute_gamma(
    model: &ModelSpec,
    domain: ChebDomain,
    degree: usize,
    dt: f64,
    settings: &RunSettings,
) -> Result<Precompute> {
    match settings.backend_for(model) {
        MomentBackend::Analytic => {
            let (shift, var) = model.conditional_normal_params(dt)?;
            let gamma = gamma_normal(domain, degree, shift / dt, var / dt, dt)?;
            Ok(Precompute { gamma, density: None, draws: None })
        }
        MomentBackend::Fourier => {
            let mut quad = settings.quad.clone();
            if quad.cumulants.is_none() {
                quad.cumulants = Some(model.log_return_cumulants(dt)?);
            }
            let cf = |z| model.merton_cf(z, dt).expect("fourier backend needs a cf");
            let density = cos_density(&cf, &quad)?;
            let gamma = gamma_fourier(domain, degree, &cf, dt, &quad)?;
            Ok(Precompute { gamma, density: Some(density), draws: None })
        }
        MomentBackend::MonteCarlo => {
            let draws = McDraws::for_model(model, settings.m_pre, precompute_seed(settings.seed));
            let gamma = gamma_mc_with_draws(domain, degree, model, dt, &draws)?;
            Ok(Precompute { gamma, density: None, draws: Some(draws) })
        }
    }
}

/// A priced product ready for path evaluation.
pub struct PricedProduct {
    pub solution: DcSolution,
    pub precompute: Precompute,
}

/// Prices `product` under `model`: domain selection, pre-computation and
/// backward induction. Returns the solution and the precompute duration.
pub fn build_solution(
    product: &ProductSpec,
    model: &ModelSpec,
    settings: &RunSettings,
) -> Result<(PricedProduct, f64, f64)> {
    product.validate()?;
    model.validate()?;
    let domain = match settings.domain {
        Some(d) => d,
        None => default_domain(product)?,
    };
    let degree = settings.degree_for(product);

    let t0 = Instant::now();
    let precompute = precompute_gamma(model, domain, degree, product.dt(), settings)?;
    let precompute_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let terminal = if settings.smoothing {
        Some(TerminalPricer::for_model(
            model,
            precompute.density.as_ref(),
            precompute.draws.as_ref(),
        )?)
    } else {
        None
    };
    let solution = backward_induction_many(
        std::slice::from_ref(product),
        domain,
        &precompute.gamma,
        model.r(),
        terminal.as_ref(),
    )?
    .pop()
    .expect("single product");
    let induction_secs = t1.elapsed().as_secs_f64();

    Ok((PricedProduct { solution, precompute }, precompute_secs, induction_secs))
}

/// Exposure evaluation of one solution on paths whose grid equals the
/// product's exercise/monitoring grid.
pub fn path_exposures(solution: &DcSolution, paths: &PathSet) -> Result<ExposureMatrix> {
    let n = solution.n_dates();
    if paths.grid.len() != n + 1 {
        return Err(Error::Mismatch(format!(
            "paths have {} dates, product has {}",
            paths.grid.len(),
            n + 1
        )));
    }
    let dt = solution.dt();
    for (u, &t) in paths.grid.iter().enumerate() {
        if (t - dt * u as f64).abs() > 1e-9 {
            return Err(Error::Mismatch(format!(
                "path grid date {t} does not match exercise date {}",
                dt * u as f64
            )));
        }
    }
    let grid = TimeGrid::build(solution.product.maturity, n, ExposureGrid::Exercise)?;
    let plan = EvalPlan::for_solution(solution, &grid, None)?;
    Ok(evaluate_on_paths(&plan, &grid, paths))
}

/// Per-grid-index evaluation data for one product: the coefficient vector
/// to price with, and the continuation coefficients for exercise tests at
/// event dates.
struct EvalPlan<'a> {
    solution: &'a DcSolution,
    /// For each union-grid index: value polynomial (exact or fractional).
    value_at: Vec<ChebPoly>,
    /// Event ordinal per union-grid index.
    ordinal: Vec<Option<usize>>,
}

/// Builds fractional-step moment matrices on demand, keyed by the step
/// length, so grids with repeating remainders reuse them.
pub struct FractionalGammaCache<'a> {
    model: &'a ModelSpec,
    settings: &'a RunSettings,
    domain: ChebDomain,
    degree: usize,
    cache: HashMap<u64, MomentMatrix>,
}

impl<'a> FractionalGammaCache<'a> {
    pub fn new(
        model: &'a ModelSpec,
        settings: &'a RunSettings,
        domain: ChebDomain,
        degree: usize,
    ) -> Self {
        Self { model, settings, domain, degree, cache: HashMap::new() }
    }

    fn get(&mut self, dt: f64) -> Result<&MomentMatrix> {
        let key = dt.to_bits();
        if !self.cache.contains_key(&key) {
            let pre = precompute_gamma(self.model, self.domain, self.degree, dt, self.settings)?;
            self.cache.insert(key, pre.gamma);
        }
        Ok(&self.cache[&key])
    }
}

impl<'a> EvalPlan<'a> {
    /// Prepares the per-date polynomials. `frac` supplies fractional-step
    /// moment matrices for reporting dates between events; `None` requires
    /// every grid date to be an event date.
    fn for_solution(
        solution: &'a DcSolution,
        grid: &TimeGrid,
        mut frac: Option<&mut FractionalGammaCache<'_>>,
    ) -> Result<Self> {
        let ordinal = grid.event_ordinals();
        let mut value_at = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            match ordinal[idx] {
                Some(u) => value_at.push(solution.value_polys[u].clone()),
                None => {
                    if !grid.is_report[idx] {
                        // state cannot change here and nothing is recorded:
                        // keep a placeholder that is never evaluated
                        value_at.push(solution.value_polys[0].clone());
                        continue;
                    }
                    let cache = frac.as_deref_mut().ok_or_else(|| {
                        Error::Mismatch(
                            "reporting date off the event grid needs fractional-step moments"
                                .into(),
                        )
                    })?;
                    let next = grid
                        .next_event_after(idx)
                        .ok_or_else(|| Error::Mismatch("no event after reporting date".into()))?;
                    let dt_frac = grid.times[next] - grid.times[idx];
                    let next_u = ordinal[next].expect("next event has an ordinal");
                    let gamma_frac = cache.get(dt_frac)?;
                    let discount = (-solution.r * dt_frac).exp();
                    value_at.push(fractional_step_poly(
                        &solution.value_polys[next_u],
                        gamma_frac,
                        discount,
                    )?);
                }
            }
        }
        Ok(Self { solution, value_at, ordinal })
    }
}

/// Walks every path through the union grid, maintaining exercise/knock-out
/// state at event dates and recording exposures at reporting dates.
/// Parallel across paths; identical to sequential evaluation.
fn evaluate_on_paths(plan: &EvalPlan<'_>, grid: &TimeGrid, paths: &PathSet) -> ExposureMatrix {
    let n_reports = grid.n_reports();
    let report_slot: Vec<Option<usize>> = {
        let mut next = 0;
        grid.is_report
            .iter()
            .map(|&r| {
                if r {
                    let s = next;
                    next += 1;
                    Some(s)
                } else {
                    None
                }
            })
            .collect()
    };

    let product = &plan.solution.product;
    let n_dates = plan.solution.n_dates();
    let log_barrier = product.log_barrier();
    let width = grid.len();

    let mut exposures = vec![0.0; paths.n_paths * n_reports];
    let mut alive = vec![true; paths.n_paths * n_reports];

    exposures
        .par_chunks_mut(n_reports)
        .zip(alive.par_chunks_mut(n_reports))
        .enumerate()
        .for_each(|(path, (exp_row, alive_row))| {
            let mut dead = false;
            let mut basis = vec![0.0; plan.solution.value_polys[0].coeffs.len()];
            for idx in 0..width {
                let x = paths.values[path * width + idx];
                let record = report_slot[idx];

                if dead {
                    if let Some(slot) = record {
                        alive_row[slot] = false;
                    }
                    continue;
                }

                // knock-out test at monitoring dates
                if let (Some(b), Some(_)) = (log_barrier, plan.ordinal[idx]) {
                    if x > b {
                        dead = true;
                        if let Some(slot) = record {
                            alive_row[slot] = false;
                        }
                        continue;
                    }
                }

                let exposure = match plan.ordinal[idx] {
                    Some(u) if u == n_dates => {
                        // terminal date: exact payoff
                        product.payoff(x).max(0.0)
                    }
                    Some(u) if product.has_early_exercise() => {
                        let g = product.payoff(x);
                        let exercised = if g > 0.0 {
                            let cont = continuation_value(plan, u, x, &mut basis);
                            g >= cont - EXERCISE_TIE_EPS
                        } else {
                            false
                        };
                        if exercised {
                            dead = true;
                            g
                        } else {
                            value_of(plan, grid, idx, x, &mut basis).max(0.0)
                        }
                    }
                    _ => value_of(plan, grid, idx, x, &mut basis).max(0.0),
                };

                if let Some(slot) = record {
                    exp_row[slot] = exposure;
                }
            }
        });

    ExposureMatrix { exposures, alive, n_paths: paths.n_paths, n_dates: n_reports }
}

#[inline]
fn value_of(plan: &EvalPlan<'_>, grid: &TimeGrid, idx: usize, x: f64, basis: &mut [f64]) -> f64 {
    let sol = plan.solution;
    if let Some(b) = sol.product.log_barrier() {
        if x > b {
            return 0.0;
        }
    }
    if sol.domain.contains(x) {
        let poly = &plan.value_at[idx];
        basis_row(sol.domain.to_unit(x).clamp(-1.0, 1.0), basis);
        poly.coeffs.iter().zip(basis.iter()).map(|(c, b)| c * b).sum()
    } else {
        sol.extension_value_at_time(grid.times[idx], x)
            .expect("extension covers exterior points")
    }
}

#[inline]
fn continuation_value(plan: &EvalPlan<'_>, u: usize, x: f64, basis: &mut [f64]) -> f64 {
    let sol = plan.solution;
    if sol.domain.contains(x) {
        let poly = &sol.continuation_polys[u];
        basis_row(sol.domain.to_unit(x).clamp(-1.0, 1.0), basis);
        poly.coeffs.iter().zip(basis.iter()).map(|(c, b)| c * b).sum()
    } else {
        sol.continuation(u, x).expect("extension covers exterior points")
    }
}

/// One exposure run: profile plus phase timings and the solution.
pub struct ExposureRun {
    pub profile: ExposureProfile,
    pub timings: PhaseTimings,
    pub solution: DcSolution,
}

/// End-to-end exposure calculation: simulate, pre-compute, time-step,
/// aggregate. Deterministic given the settings seed.
pub fn run_exposure(
    product: &ProductSpec,
    model: &ModelSpec,
    settings: &RunSettings,
) -> Result<ExposureRun> {
    if settings.m_paths == 0 {
        return Err(invalid("m_paths", "need at least one simulation path"));
    }
    let total0 = Instant::now();
    let grid = TimeGrid::build(product.maturity, product.n_dates, settings.grid)?;
    if matches!(product.kind, ProductKind::BarrierUpOutCall)
        && grid.times.len() != product.n_dates + 1
    {
        return Err(Error::Unsupported(
            "barrier exposures are reported on the monitoring dates; \
             off-grid valuation above the barrier is not defined"
                .into(),
        ));
    }

    let t_sim = Instant::now();
    let paths = simulate_paths(
        model,
        Measure::P,
        settings.s0.ln(),
        &grid.times,
        settings.m_paths,
        settings.seed,
    )?;
    let simulation = t_sim.elapsed().as_secs_f64();

    let (priced, precompute, induction) = build_solution(product, model, settings)?;

    let t_step = Instant::now();
    let mut frac_cache = FractionalGammaCache::new(
        model,
        settings,
        priced.solution.domain,
        priced.solution.value_polys[0].degree(),
    );
    let plan = EvalPlan::for_solution(&priced.solution, &grid, Some(&mut frac_cache))?;
    let em = evaluate_on_paths(&plan, &grid, &paths);
    let ee = expected_exposure(&em);
    let pfe_profile = pfe(&em, settings.alpha)?;
    let time_stepping = induction + t_step.elapsed().as_secs_f64();

    let price_t0 = priced.solution.price(0, settings.s0.ln())?;
    let profile = ExposureProfile {
        times: grid.report_times(),
        ee,
        pfe: pfe_profile,
        alpha: settings.alpha,
        price_t0,
        m_paths: settings.m_paths,
        seed: settings.seed,
    };
    let timings = PhaseTimings {
        simulation,
        precompute,
        time_stepping,
        total: total0.elapsed().as_secs_f64(),
    };
    Ok(ExposureRun { profile, timings, solution: priced.solution })
}

/// Exposure run against externally supplied paths (shared-scenario
/// comparisons). The path grid must match the product grid.
pub fn run_exposure_with_paths(
    product: &ProductSpec,
    model: &ModelSpec,
    settings: &RunSettings,
    paths: &PathSet,
) -> Result<ExposureRun> {
    let (priced, precompute, induction) = build_solution(product, model, settings)?;
    let t_step = Instant::now();
    let em = path_exposures(&priced.solution, paths)?;
    let ee = expected_exposure(&em);
    let pfe_profile = pfe(&em, settings.alpha)?;
    let time_stepping = induction + t_step.elapsed().as_secs_f64();
    let price_t0 = priced.solution.price(0, paths.values[0])?;
    Ok(ExposureRun {
        profile: ExposureProfile {
            times: paths.grid.clone(),
            ee,
            pfe: pfe_profile,
            alpha: settings.alpha,
            price_t0,
            m_paths: paths.n_paths,
            seed: paths.seed,
        },
        timings: PhaseTimings {
            simulation: 0.0,
            precompute,
            time_stepping,
            total: precompute + time_stepping,
        },
        solution: priced.solution,
    })
}
