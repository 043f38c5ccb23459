use super::*;
use crate::models::ModelSpec;
use crate::rng;
use chebex_oracles::{adaptive_quadrature, moments_quadrature};
use num_complex::Complex64;
use statrs::distribution::{Continuous, Normal};

fn unit_domain() -> ChebDomain {
    ChebDomain::new(-1.0, 1.0).unwrap()
}

fn paper_domain() -> ChebDomain {
    ChebDomain::new(0.2f64.ln(), 350f64.ln()).unwrap()
}

#[test]
fn standard_normal_mass_within_one_sigma() {
    let m = truncated_cheb_moments(0.0, 1.0, 4).unwrap();
    assert!((m.moments[0] - 0.682_689_492_137).abs() < 1e-9, "{}", m.moments[0]);
}

#[test]
fn centered_first_moment_vanishes() {
    for sigma in [0.05, 0.3, 1.0, 2.5] {
        let m = truncated_cheb_moments(0.0, sigma, 2).unwrap();
        assert!(m.moments[1].abs() < 1e-15, "sigma={sigma}: {}", m.moments[1]);
    }
}

#[test]
fn second_moment_matches_quadrature_oracle() {
    let m = truncated_cheb_moments(0.3, 0.5, 4).unwrap();
    let dist = Normal::new(0.3, 0.5).unwrap();
    let want = adaptive_quadrature(&|y: f64| (2.0 * y * y - 1.0) * dist.pdf(y), -1.0, 1.0, 1e-13);
    assert!((m.moments[2] - want).abs() < 1e-10, "{} vs {want}", m.moments[2]);
}

#[test]
fn recursion_agrees_with_quadrature_on_spot_grid() {
    // fuller grid runs in the acceptance suite
    for &mu in &[0.0, 0.3, 1.0, -3.0] {
        for &sigma in &[0.01, 0.5, 2.0] {
            let m = truncated_cheb_moments(mu, sigma, 80).unwrap();
            let q = moments_quadrature(mu, sigma, 80).unwrap();
            let worst = m
                .moments
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-9, "mu={mu} sigma={sigma}: max err {worst:.2e}");
        }
    }
}

#[test]
fn derivative_moments_match_quadrature_of_basis_derivative() {
    let (mu, sigma) = (0.2, 0.7);
    let m = truncated_cheb_moments(mu, sigma, 52).unwrap();
    let dist = Normal::new(mu, sigma).unwrap();
    for n in [1usize, 2, 3, 7, 20, 51] {
        // T'_n(cos t) = n sin(n t) / sin t
        let f = |y: f64| {
            let t = y.acos();
            let s = t.sin();
            if s.abs() < 1e-12 {
                // endpoint limit: T'_n(±1) = (±1)^{n+1} n^2
                let sign = if y > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) };
                sign * (n * n) as f64 * dist.pdf(y)
            } else {
                (n as f64) * (n as f64 * t).sin() / s * dist.pdf(y)
            }
        };
        let want = adaptive_quadrature(&f, -1.0 + 1e-10, 1.0 - 1e-10, 1e-12);
        assert!(
            (m.deriv_moments[n] - want).abs() < 1e-8,
            "n={n}: {} vs {want}",
            m.deriv_moments[n]
        );
    }
}

#[test]
fn vanishing_sigma_limit_recovers_basis_values() {
    for &mu in &[-0.8, -0.2, 0.0, 0.4, 0.9] {
        let m = truncated_cheb_moments(mu, 1e-6, 30).unwrap();
        for (j, got) in m.moments.iter().enumerate() {
            let want = (j as f64 * mu.acos()).cos();
            assert!((got - want).abs() < 1e-6, "mu={mu} j={j}: {got} vs {want}");
        }
    }
}

#[test]
fn moments_reject_bad_parameters() {
    assert!(truncated_cheb_moments(0.0, 0.0, 5).is_err());
    assert!(truncated_cheb_moments(0.0, -1.0, 5).is_err());
    assert!(truncated_cheb_moments(f64::NAN, 1.0, 5).is_err());
}

#[test]
fn gamma_row_on_unit_domain_is_the_plain_truncated_moment() {
    // with domain [-1,1] the proposition's transform is the identity
    let domain = unit_domain();
    let (drift, var, dt) = (0.1, 0.4, 0.25);
    let x = 0.3;
    let row = gamma_row_normal(domain, x, drift, var, dt, 12).unwrap();
    let direct = truncated_cheb_moments(x + drift * dt, (var * dt).sqrt(), 12).unwrap();
    for (a, b) in row.iter().zip(&direct.moments) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn degenerate_variance_concentrates_at_the_node() {
    let domain = paper_domain();
    let x = 100f64.ln();
    let row = gamma_row_normal(domain, x, 0.0, 1e-12, 1.0 / 52.0, 20).unwrap();
    let z = domain.to_unit(x);
    for (j, got) in row.iter().enumerate() {
        let want = (j as f64 * z.acos()).cos();
        assert!((got - want).abs() < 1e-6, "j={j}");
    }
}

#[test]
fn gamma_normal_probability_column_and_bounds() {
    let domain = paper_domain();
    let g = gamma_normal(domain, 60, 0.03 - 0.5 * 0.0625, 0.0625, 1.0 / 52.0).unwrap();
    for k in 0..=60 {
        let p = g.row(k)[0];
        assert!((0.0..=1.0 + ENTRY_SLACK).contains(&p), "row {k}: mass {p}");
        for &e in g.row(k) {
            assert!(e.abs() <= 1.0 + ENTRY_SLACK);
        }
    }
    assert_eq!(g.backend, MomentBackend::Analytic);
}

/// Simulates `m` one-step increments from `x` and averages the basis row;
/// plain sample-mean oracle, independent of the moment engine.
fn mc_row_oracle(
    domain: ChebDomain,
    x: f64,
    n: usize,
    m: usize,
    seed: u64,
    step: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut sums = vec![0.0; n + 1];
    let mut sums2 = vec![0.0; n + 1];
    let mut basis = vec![0.0; n + 1];
    let mut rng = rng::substream(seed, 0);
    for _ in 0..m {
        let x_end = x + step(&mut rng);
        if domain.contains(x_end) {
            crate::cheb::basis_row(domain.to_unit(x_end), &mut basis);
            for j in 0..=n {
                sums[j] += basis[j];
                sums2[j] += basis[j] * basis[j];
            }
        }
        // excursions outside the domain contribute zero to every entry
    }
    let mf = m as f64;
    let mut mean = vec![0.0; n + 1];
    let mut se = vec![0.0; n + 1];
    for j in 0..=n {
        mean[j] = sums[j] / mf;
        let var = (sums2[j] / mf - mean[j] * mean[j]).max(0.0);
        se[j] = (var / mf).sqrt();
    }
    (mean, se)
}

#[test]
fn analytic_row_matches_monte_carlo_for_black_scholes() {
    let domain = paper_domain();
    let (sigma, r, dt) = (0.25, 0.03, 1.0 / 52.0);
    let drift = r - 0.5 * sigma * sigma;
    let x = 100f64.ln();
    let n = 40;
    let row = gamma_row_normal(domain, x, drift, sigma * sigma, dt, n).unwrap();

    let m = 10_000_000;
    let (mc, se) = mc_row_oracle(domain, x, n, m, 99, |rng| {
        drift * dt + sigma * dt.sqrt() * rng::standard_normal(rng)
    });
    for j in 0..=n {
        let tol = (3.0 * se[j]).max(5e-4);
        assert!((row[j] - mc[j]).abs() < tol, "j={j}: {} vs {} (tol {tol:.1e})", row[j], mc[j]);
    }
}

#[test]
fn fourier_with_zero_jump_intensity_collapses_to_analytic() {
    let spec = ModelSpec::Merton {
        sigma: 0.25,
        mu_p: 0.1,
        r: 0.03,
        jump_intensity: 0.0,
        jump_mean: -0.5,
        jump_std: 0.4,
    };
    let domain = paper_domain();
    let dt = 1.0 / 52.0;
    let n = 30;
    let cfg = QuadConfig { cumulants: Some(spec.log_return_cumulants(dt).unwrap()), ..Default::default() };
    let cf = |z: Complex64| spec.merton_cf(z, dt).unwrap();
    let fourier = gamma_fourier(domain, n, &cf, dt, &cfg).unwrap();
    let analytic = gamma_normal(domain, n, 0.03 - 0.5 * 0.0625, 0.0625, dt).unwrap();
    let mut worst = 0.0f64;
    for (a, b) in fourier.gamma.iter().zip(&analytic.gamma) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 1e-7, "max |fourier - analytic| = {worst:.2e}");
    assert_eq!(fourier.backend, MomentBackend::Fourier);
}

#[test]
fn fourier_row_matches_compound_poisson_monte_carlo() {
    let spec = ModelSpec::paper_merton();
    let domain = paper_domain();
    let dt = 1.0 / 52.0;
    let n = 40;
    let cfg = QuadConfig { cumulants: Some(spec.log_return_cumulants(dt).unwrap()), ..Default::default() };
    let cf = |z: Complex64| spec.merton_cf(z, dt).unwrap();
    let fourier = gamma_fourier(domain, n, &cf, dt, &cfg).unwrap();

    let x = 100f64.ln();
    // row index of the node closest to log 100
    let nodes = domain.nodes(n).unwrap();
    let k = nodes
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().partial_cmp(&(b.1 - x).abs()).unwrap())
        .unwrap()
        .0;
    let x_node = nodes[k];

    let (sigma, r, lambda, alpha, beta) = (0.25, 0.03, 0.4, -0.5, 0.4);
    let kappa: f64 = (alpha + 0.5 * beta * beta).exp() - 1.0;
    let drift = r - 0.5 * sigma * sigma - lambda * kappa;
    let m = 10_000_000;
    let (mc, se) = mc_row_oracle(domain, x_node, n, m, 7, |rng| {
        let u = rng::uniform_open(rng);
        let mut jumps = 0u32;
        let mean = lambda * dt;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && jumps < 100 {
            jumps += 1;
            p *= mean / jumps as f64;
            cdf += p;
        }
        let jf = jumps as f64;
        let var = sigma * sigma * dt + jf * beta * beta;
        drift * dt + jf * alpha + var.sqrt() * rng::standard_normal(rng)
    });
    for j in 0..=n {
        let tol = (3.0 * se[j]).max(5e-4);
        assert!(
            (fourier.row(k)[j] - mc[j]).abs() < tol,
            "j={j}: {} vs {} (tol {tol:.1e})",
            fourier.row(k)[j],
            mc[j]
        );
    }
}

#[test]
fn fourier_reports_nonconvergence() {
    let spec = ModelSpec::paper_merton();
    let dt = 1.0 / 52.0;
    let cf = |z: Complex64| spec.merton_cf(z, dt).unwrap();
    // far too few terms for the requested interval
    let cfg = QuadConfig { n_cos: 8, ..Default::default() };
    let err = gamma_fourier(paper_domain(), 10, &cf, dt, &cfg);
    assert!(err.is_err());
}

#[test]
fn estimated_cumulants_match_analytic_ones() {
    let spec = ModelSpec::paper_merton();
    let dt = 1.0 / 52.0;
    let (c1, c2, _) = spec.log_return_cumulants(dt).unwrap();
    let cf = |z: Complex64| spec.merton_cf(z, dt).unwrap();
    // density built from estimated cumulants must cover the analytic window
    let cfg = QuadConfig { n_cos: 2048, ..Default::default() };
    let density = cos_density(&cf, &cfg).unwrap();
    let mid = 0.5 * (density.a + density.b);
    assert!((mid - c1).abs() < 1e-6, "midpoint {mid} vs c1 {c1}");
    assert!(density.b - density.a > 2.0 * 10.0 * c2.sqrt());
}

#[test]
fn mc_gamma_matches_analytic_for_black_scholes() {
    let spec = ModelSpec::paper_black_scholes();
    let domain = paper_domain();
    let dt = 1.0 / 52.0;
    let n = 20;
    let m_pre = 1_000_000;
    let mc = gamma_mc(domain, n, &spec, dt, m_pre, 5).unwrap();
    let analytic = gamma_normal(domain, n, 0.03 - 0.5 * 0.0625, 0.0625, dt).unwrap();
    let bound = 3.0 / (m_pre as f64).sqrt();
    let mut worst = 0.0f64;
    for (a, b) in mc.gamma.iter().zip(&analytic.gamma) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst < bound, "max err {worst:.2e} vs bound {bound:.2e}");
    for k in 0..=n {
        let p = mc.row(k)[0];
        assert!((0.0..=1.0 + ENTRY_SLACK).contains(&p));
    }
}

#[test]
fn mc_gamma_is_deterministic_in_the_seed() {
    let spec = ModelSpec::paper_cev();
    let domain = paper_domain();
    let a = gamma_mc(domain, 8, &spec, 1.0 / 52.0, 2_000, 11).unwrap();
    let b = gamma_mc(domain, 8, &spec, 1.0 / 52.0, 2_000, 11).unwrap();
    let c = gamma_mc(domain, 8, &spec, 1.0 / 52.0, 2_000, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.gamma, c.gamma);
}

#[test]
fn mc_gamma_rejects_tiny_sample_counts() {
    let spec = ModelSpec::paper_black_scholes();
    assert!(gamma_mc(paper_domain(), 8, &spec, 1.0 / 52.0, 10, 1).is_err());
}

#[test]
fn mc_error_decays_like_inverse_sqrt_sample_count() {
    let spec = ModelSpec::paper_black_scholes();
    let domain = paper_domain();
    let dt = 1.0 / 52.0;
    let n = 16;
    let analytic = gamma_normal(domain, n, 0.03 - 0.5 * 0.0625, 0.0625, dt).unwrap();

    let mut points = Vec::new();
    for &m_pre in &[1_000usize, 10_000, 100_000, 1_000_000] {
        let mc = gamma_mc(domain, n, &spec, dt, m_pre, 31).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in mc.gamma.iter().zip(&analytic.gamma) {
            worst = worst.max((a - b).abs());
        }
        points.push(((m_pre as f64).ln(), worst.ln()));
    }
    // least-squares slope over the decades
    let n_pts = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n_pts * sxy - sx * sy) / (n_pts * sxx - sx * sx);
    assert!((slope + 0.5).abs() < 0.1, "convergence slope {slope:.3}");
}

#[test]
fn moment_cache_roundtrip_is_exact() {
    let spec = ModelSpec::paper_black_scholes();
    let domain = paper_domain();
    let g = gamma_normal(domain, 12, 0.01, 0.0625, 1.0 / 52.0).unwrap();
    let key = MomentCacheKey::for_model(
        &spec,
        domain,
        12,
        1.0 / 52.0,
        MomentBackend::Analytic,
        None,
        None,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gamma.json");
    save_moment_cache(&path, &key, &g).unwrap();
    let loaded = load_moment_cache(&path, &key).unwrap().unwrap();
    assert_eq!(g, loaded);
    assert!(g.gamma.iter().zip(&loaded.gamma).all(|(a, b)| a.to_bits() == b.to_bits()));

    // a different key misses
    let other = MomentCacheKey { n: 13, ..key };
    assert!(load_moment_cache(&path, &other).unwrap().is_none());
}

#[test]
fn gauss_legendre_integrates_polynomials_exactly() {
    let (x, w) = gauss_legendre(12);
    let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(8)).sum();
    assert!((quad - 2.0 / 9.0).abs() < 1e-13);
    let total: f64 = w.iter().sum();
    assert!((total - 2.0).abs() < 1e-13);
    // odd order hits the midpoint
    let (x, w) = gauss_legendre(7);
    assert_eq!(x[3], 0.0);
    let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (xi * 2.5).cos()).sum();
    let want = 2.0 * (2.5f64).sin() / 2.5;
    assert!((quad - want).abs() < 1e-10);
}

#[test]
fn basis_row_oracle_sanity() {
    // keep the MC oracle honest: a constant increment lands on T_j(z) exactly
    let domain = unit_domain();
    let (mean, _) = mc_row_oracle(domain, 0.2, 5, 100, 1, |_| 0.3);
    for (j, m) in mean.iter().enumerate() {
        let want = (j as f64 * 0.5f64.acos()).cos();
        assert!((m - want).abs() < 1e-12);
    }
}

#[test]
fn apply_contracts_coefficients_against_rows() {
    let domain = unit_domain();
    let g = gamma_normal(domain, 6, 0.0, 0.1, 0.5).unwrap();
    let coeffs = vec![1.0, 0.5, 0.0, 0.0, 0.0, 0.0, -0.25];
    let nodal = g.apply(&coeffs).unwrap();
    for k in 0..=6 {
        let direct: f64 = g.row(k).iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        assert_eq!(nodal[k], direct);
    }
    assert!(g.apply(&coeffs[..3]).is_err());
}
