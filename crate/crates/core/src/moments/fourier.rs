//! Fourier backend: the transition density is recovered from the
//! characteristic function by a cosine-series expansion on a cumulant-sized
//! truncation interval, and the basis expectations are then integrated by
//! panelled Gauss-Legendre quadrature against the interpolation domain.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cheb::{basis_row, ChebDomain};
use crate::error::{Error, Result};
use crate::moments::{MomentBackend, MomentMatrix};

/// Quadrature configuration for [`gamma_fourier`].
#[derive(Debug, Clone)]
pub struct QuadConfig {
    /// Number of cosine-series terms used for the density.
    pub n_cos: usize,
    /// Gauss-Legendre order per integration panel.
    pub gl_order: usize,
    /// Truncation half-width in multiples of `sqrt(c2 + sqrt(c4))`.
    pub interval_widths: f64,
    /// First, second and fourth cumulants of the increment. When absent,
    /// `c1` and `c2` are estimated from the characteristic function by
    /// finite differences and `c4` is taken as zero, which is only adequate
    /// for light-tailed increments.
    pub cumulants: Option<(f64, f64, f64)>,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { n_cos: 1024, gl_order: 256, interval_widths: 12.0, cumulants: None }
    }
}

/// Cosine-series representation of an increment density on `[a, b]`;
/// evaluates to zero outside.
#[derive(Debug, Clone)]
pub struct CosDensity {
    pub a: f64,
    pub b: f64,
    coeffs: Vec<f64>,
}

impl CosDensity {
    /// Density value at `y`.
    pub fn eval(&self, y: f64) -> f64 {
        if y < self.a || y > self.b {
            return 0.0;
        }
        let theta = std::f64::consts::PI * (y - self.a) / (self.b - self.a);
        // sum' F_m cos(m theta) via the cosine addition recurrence
        let (sin_t, cos_t) = theta.sin_cos();
        let mut c_prev = 1.0; // cos(0)
        let mut s_prev = 0.0; // sin(0)
        let mut acc = 0.5 * self.coeffs[0];
        for &f in &self.coeffs[1..] {
            let c = c_prev * cos_t - s_prev * sin_t;
            let s = s_prev * cos_t + c_prev * sin_t;
            acc += f * c;
            c_prev = c;
            s_prev = s;
        }
        acc
    }
}

/// Recovers the density of the log-return increment over `dt` from its
/// characteristic function. Fails with diagnostics when the series has not
/// decayed by the last retained term (truncation interval too tight or too
/// few terms).
pub fn cos_density(
    charfn: &(impl Fn(Complex64) -> Complex64 + Sync),
    cfg: &QuadConfig,
) -> Result<CosDensity> {
    let (c1, c2, c4) = match cfg.cumulants {
        Some(c) => c,
        None => estimate_cumulants(charfn)?,
    };
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(Error::Numerical(format!(
            "second cumulant {c2} is not positive; cannot size truncation interval"
        )));
    }
    let half_width = cfg.interval_widths * (c2 + c4.max(0.0).sqrt()).sqrt();
    let a = c1 - half_width;
    let b = c1 + half_width;

    let width = b - a;
    let mut coeffs = Vec::with_capacity(cfg.n_cos);
    for m in 0..cfg.n_cos {
        let u = m as f64 * std::f64::consts::PI / width;
        let phi = charfn(Complex64::new(u, 0.0));
        let f_m = 2.0 / width * (phi * (-Complex64::i() * u * a).exp()).re;
        coeffs.push(f_m);
    }

    // the characteristic function must have decayed across the retained band
    let tail = charfn(Complex64::new(
        (cfg.n_cos - 1) as f64 * std::f64::consts::PI / width,
        0.0,
    ))
    .norm();
    if tail > 1e-10 {
        return Err(Error::Numerical(format!(
            "cosine series not converged: |phi(u_max)| = {tail:.3e} on [{a:.4}, {b:.4}] \
             with {} terms; widen the interval or raise n_cos",
            cfg.n_cos
        )));
    }

    Ok(CosDensity { a, b, coeffs })
}

/// `c1` and `c2` from symmetric finite differences of `log phi` at zero.
fn estimate_cumulants(
    charfn: &(impl Fn(Complex64) -> Complex64 + Sync),
) -> Result<(f64, f64, f64)> {
    let h = 1e-4;
    let lp = |u: f64| charfn(Complex64::new(u, 0.0)).ln();
    let up = lp(h);
    let dn = lp(-h);
    let c1 = (up - dn).im / (2.0 * h);
    let c2 = -(up + dn).re / (h * h);
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(Error::Numerical("characteristic function not differentiable at 0".into()));
    }
    Ok((c1, c2, 0.0))
}

/// Moment matrix from a characteristic function of the increment over `dt`:
/// entry `(k, j)` is the integral of `T_j(to_unit(x)) q(x - x_k)` over the
/// intersection of the domain with the density's truncation interval.
pub fn gamma_fourier(
    domain: ChebDomain,
    n: usize,
    charfn: &(impl Fn(Complex64) -> Complex64 + Sync),
    dt: f64,
    cfg: &QuadConfig,
) -> Result<MomentMatrix> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be > 0".into() });
    }
    let density = cos_density(charfn, cfg)?;
    let (gl_x, gl_w) = gauss_legendre(cfg.gl_order);
    let nodes = domain.nodes(n)?;

    // density mode sits near c1; panel boundaries framing it keep the sharp
    // diffusion peak inside one well-resolved panel
    let c1 = 0.5 * (density.a + density.b);
    let peak_half_width = 0.25 * (density.b - density.a).min(1.0);

    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&x_k| {
            let lo = domain.lo.max(x_k + density.a);
            let hi = domain.hi.min(x_k + density.b);
            let mut row = vec![0.0; n + 1];
            if lo >= hi {
                return row;
            }
            let peak = x_k + c1;
            let mut cuts = vec![lo];
            for c in [peak - peak_half_width, peak + peak_half_width] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
            cuts.push(hi);

            let mut basis = vec![0.0; n + 1];
            for panel in cuts.windows(2) {
                let mid = 0.5 * (panel[0] + panel[1]);
                let half = 0.5 * (panel[1] - panel[0]);
                for (&t, &w) in gl_x.iter().zip(&gl_w) {
                    let x = mid + half * t;
                    let q = density.eval(x - x_k);
                    if q == 0.0 {
                        continue;
                    }
                    let z = domain.to_unit(x).clamp(-1.0, 1.0);
                    basis_row(z, &mut basis);
                    let wq = w * half * q;
                    for (r, &b) in row.iter_mut().zip(basis.iter()) {
                        *r += wq * b;
                    }
                }
            }
            // clip quadrature roundoff that would violate the moment bounds
            for r in row.iter_mut() {
                *r = r.clamp(-1.0, 1.0);
            }
            row
        })
        .collect();

    let mut gamma = Vec::with_capacity((n + 1) * (n + 1));
    for row in rows {
        gamma.extend(row);
    }
    MomentMatrix::new(gamma, n, domain, dt, MomentBackend::Fourier)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // midpoint node: P_n(0) = 0 for odd n
        let (_, d) = legendre_with_derivative(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
