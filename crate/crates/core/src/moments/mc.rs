//! Monte Carlo backend: conditional expectations estimated from `m_pre`
//! simulated one-step increments, re-using one draw set across every node
//! (common random numbers), so the estimated matrix is a smooth function of
//! the node and reproducible across platforms and thread counts.

use rayon::prelude::*;

use crate::cheb::{basis_row, ChebDomain};
use crate::error::{invalid, Result};
use crate::models::{ModelSpec, CEV_SUBSTEPS};
use crate::moments::{MomentBackend, MomentMatrix};
use crate::rng;

/// Pre-generated draws shared by all nodes: per path `i`, `substeps` normal
/// draws and (for jump models) matching uniforms, from substream `i` of
/// `seed`.
#[derive(Debug, Clone)]
pub struct McDraws {
    pub normals: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub m_pre: usize,
    pub substeps: usize,
    pub seed: u64,
}

impl McDraws {
    /// Draws for `model` with its natural substep count: 1 for models with
    /// exact one-step sampling, [`CEV_SUBSTEPS`] for the Euler scheme.
    pub fn for_model(model: &ModelSpec, m_pre: usize, seed: u64) -> Self {
        let substeps = match model {
            ModelSpec::Cev { .. } => CEV_SUBSTEPS,
            _ => 1,
        };
        let needs_uniforms = matches!(model, ModelSpec::Merton { .. });
        let mut normals = vec![0.0; m_pre * substeps];
        let mut uniforms = vec![0.0; if needs_uniforms { m_pre * substeps } else { 0 }];
        if needs_uniforms {
            normals
                .par_chunks_mut(substeps)
                .zip(uniforms.par_chunks_mut(substeps))
                .enumerate()
                .for_each(|(i, (norm_chunk, unif_chunk))| {
                    let mut r = rng::substream(seed, i as u64);
                    for s in 0..substeps {
                        norm_chunk[s] = rng::standard_normal(&mut r);
                        unif_chunk[s] = rng::uniform_open(&mut r);
                    }
                });
        } else {
            normals.par_chunks_mut(substeps).enumerate().for_each(|(i, chunk)| {
                let mut r = rng::substream(seed, i as u64);
                for slot in chunk.iter_mut() {
                    *slot = rng::standard_normal(&mut r);
                }
            });
        }
        Self { normals, uniforms, m_pre, substeps, seed }
    }
}

/// Monte Carlo moment matrix: entry `(k, j)` is the draw average of
/// `T_j(to_unit(X_dt)) 1_domain(X_dt)` with `X` simulated under the pricing
/// measure from node `x_k`. Deterministic given the seed.
pub fn gamma_mc(
    domain: ChebDomain,
    n: usize,
    model: &ModelSpec,
    dt: f64,
    m_pre: usize,
    seed: u64,
) -> Result<MomentMatrix> {
    if m_pre < 1_000 {
        return Err(invalid("m_pre", "need at least 1000 pre-computation samples"));
    }
    let draws = McDraws::for_model(model, m_pre, seed);
    gamma_mc_with_draws(domain, n, model, dt, &draws)
}

/// [`gamma_mc`] with an externally owned draw set, so the pricer's smoothing
/// step can re-use the same samples.
pub fn gamma_mc_with_draws(
    domain: ChebDomain,
    n: usize,
    model: &ModelSpec,
    dt: f64,
    draws: &McDraws,
) -> Result<MomentMatrix> {
    model.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be > 0"));
    }
    if matches!(model, ModelSpec::Merton { .. }) && draws.uniforms.len() != draws.normals.len() {
        return Err(invalid("draws", "jump models need uniform draws alongside normals"));
    }
    let nodes = domain.nodes(n)?;
    let inv_m = 1.0 / draws.m_pre as f64;

    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&x_k| {
            let mut row = vec![0.0; n + 1];
            let mut basis = vec![0.0; n + 1];
            for i in 0..draws.m_pre {
                let x_end = one_step(model, x_k, dt, draws, i);
                if x_end >= domain.lo && x_end <= domain.hi {
                    basis_row(domain.to_unit(x_end).clamp(-1.0, 1.0), &mut basis);
                    for (r, &b) in row.iter_mut().zip(basis.iter()) {
                        *r += b;
                    }
                }
            }
            for r in row.iter_mut() {
                *r = (*r * inv_m).clamp(-1.0, 1.0);
            }
            row
        })
        .collect();

    let mut gamma = Vec::with_capacity((n + 1) * (n + 1));
    for row in rows {
        gamma.extend(row);
    }
    MomentMatrix::new(gamma, n, domain, dt, MomentBackend::MonteCarlo)
}

/// Evolves one increment of length `dt` from log-price `x` under the pricing
/// measure using draw set `i`. Returns the terminal log-price (`-inf` when a
/// CEV path is absorbed, which simply fails the domain test).
#[inline]
pub(crate) fn one_step(model: &ModelSpec, x: f64, dt: f64, draws: &McDraws, i: usize) -> f64 {
    let base = i * draws.substeps;
    match *model {
        ModelSpec::BlackScholes { sigma, r, .. } => {
            x + (r - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * draws.normals[base]
        }
        ModelSpec::Merton { sigma, r, jump_intensity, jump_mean, jump_std, .. } => {
            let drift = r - 0.5 * sigma * sigma - jump_intensity * model.jump_compensator();
            let k = poisson_from_uniform(jump_intensity * dt, draws.uniforms[base]) as f64;
            let var = sigma * sigma * dt + k * jump_std * jump_std;
            x + drift * dt + k * jump_mean + var.sqrt() * draws.normals[base]
        }
        ModelSpec::Cev { sigma, r, cev_exponent, .. } => {
            let h = dt / draws.substeps as f64;
            let sqrt_h = h.sqrt();
            let half_beta = 0.5 * cev_exponent;
            let mut s = x.exp();
            for step in 0..draws.substeps {
                let s_pos = s.max(0.0);
                s += r * s_pos * h
                    + sigma * s_pos.powf(half_beta) * sqrt_h * draws.normals[base + step];
            }
            if s > 0.0 {
                s.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

fn poisson_from_uniform(mean: f64, u: f64) -> u32 {
    if mean == 0.0 {
        return 0;
    }
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
