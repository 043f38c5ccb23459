//! Chebyshev interpolation core: nodes, coefficient transform, Clenshaw
//! evaluation, domain mapping and polynomial differentiation.
//!
//! Everything here works on the unit interval `[-1, 1]`; [`ChebDomain`] maps
//! an arbitrary interval onto it. Node ordering is fixed as `k = 0..=N`,
//! i.e. `z_k = cos(pi k / N)` descending from `1` to `-1`, and the
//! coefficient transform is the direct `O(N^2)` double-prime sum. Degrees of
//! a few hundred are the intended regime; no fast transform is provided.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slack allowed on `|z|` when evaluating at points that should lie in
/// `[-1, 1]` but picked up roundoff in the domain transform.
pub const UNIT_EPS: f64 = 1e-12;

/// Interpolation interval in log-price space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebDomain {
    pub lo: f64,
    pub hi: f64,
}

impl ChebDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("domain", format!("bounds must be finite, got [{lo}, {hi}]")));
        }
        if lo >= hi {
            return Err(invalid("domain", format!("lo must be < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Maps `x` in `[lo, hi]` to the unit interval:
    /// `z = 1 - 2 (hi - x) / (hi - lo)`.
    #[inline]
    pub fn to_unit(&self, x: f64) -> f64 {
        1.0 - 2.0 * (self.hi - x) / self.width()
    }

    /// Inverse map `x = hi + 0.5 (lo - hi)(1 - z)`, so `from_unit(-1) = lo`
    /// and `from_unit(1) = hi`.
    #[inline]
    pub fn from_unit(&self, z: f64) -> f64 {
        self.hi + 0.5 * (self.lo - self.hi) * (1.0 - z)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// The transformed Chebyshev points `x_k = from_unit(z_k)`, `k = 0..=n`.
    pub fn nodes(&self, n: usize) -> Result<Vec<f64>> {
        Ok(cheb_nodes(n)?.into_iter().map(|z| self.from_unit(z)).collect())
    }
}

/// Chebyshev points `z_k = cos(pi k / N)`, `k = 0..=N`, strictly decreasing
/// from `1` to `-1`. `N = 0` is rejected; constant data uses `N = 1`.
pub fn cheb_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("degree", "N must be >= 1 (constant functions use N = 1)"));
    }
    let nf = n as f64;
    Ok((0..=n)
        .map(|k| {
            // cos(pi k / N) with exact endpoints and midpoint.
            if k == 0 {
                1.0
            } else if 2 * k == n {
                0.0
            } else if k == n {
                -1.0
            } else {
                (std::f64::consts::PI * k as f64 / nf).cos()
            }
        })
        .collect())
}

/// Chebyshev coefficients of the interpolant through `values`, where
/// `values[k]` is the function value at node `z_k` (same ordering as
/// [`cheb_nodes`]):
///
/// `c_j = 2^{1{0<j<N}} / N * sum''_k values[k] T_j(z_k)`,
///
/// the double-prime sum halving the `k = 0` and `k = N` terms.
pub fn coefficients(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(invalid("values", "need at least 2 nodal values"));
    }
    let n = values.len() - 1;
    let nf = n as f64;
    let mut coeffs = vec![0.0; n + 1];
    for (j, c) in coeffs.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &v) in values.iter().enumerate() {
            // T_j(z_k) = cos(pi j k / N)
            let t = (std::f64::consts::PI * (j * k) as f64 / nf).cos();
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * v * t;
        }
        let scale = if j == 0 || j == n { 1.0 / nf } else { 2.0 / nf };
        *c = scale * acc;
    }
    Ok(coeffs)
}

/// Clenshaw evaluation of `sum_j coeffs[j] T_j(z)`.
///
/// `|z|` may exceed 1 by at most [`UNIT_EPS`]; anything further out is the
/// caller's extension logic, not interpolation.
pub fn clenshaw(coeffs: &[f64], z: f64) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(invalid("coeffs", "empty coefficient sequence"));
    }
    if !(z.is_finite() && z.abs() <= 1.0 + UNIT_EPS) {
        return Err(Error::OutOfRange(format!("clenshaw point z = {z} outside [-1, 1]")));
    }
    Ok(clenshaw_unchecked(coeffs, z))
}

/// Clenshaw recurrence without the range check. Callers guarantee
/// `|z| <= 1 + UNIT_EPS`.
#[inline]
pub(crate) fn clenshaw_unchecked(coeffs: &[f64], z: f64) -> f64 {
    let n = coeffs.len() - 1;
    if n == 0 {
        return coeffs[0];
    }
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let two_z = 2.0 * z;
    for &c in coeffs[1..].iter().rev() {
        let b = c + two_z * b1 - b2;
        b2 = b1;
        b1 = b;
    }
    coeffs[0] + z * b1 - b2
}

/// Fills `out[j] = T_j(z)` for `j = 0..out.len()` by the three-term
/// recurrence. Used where many coefficient vectors share one evaluation
/// point.
#[inline]
pub fn basis_row(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = z;
        let two_z = 2.0 * z;
        for j in 2..out.len() {
            out[j] = two_z * out[j - 1] - out[j - 2];
        }
    }
}

/// Coefficients of the derivative (in the unit variable) of a Chebyshev
/// series: `d_{k-1} = d_{k+1} + 2k c_k`, with the `j = 0` entry halved.
/// Differentiating in `x` multiplies by the chain factor `2 / (hi - lo)`.
pub fn derivative_coeffs(coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() < 2 {
        return Err(invalid("coeffs", "need degree >= 1 to differentiate"));
    }
    let n = coeffs.len() - 1;
    // two scratch slots so d[n] = d[n+1] = 0 need no special cases
    let mut d = vec![0.0; n + 2];
    for k in (1..=n).rev() {
        d[k - 1] = d[k + 1] + 2.0 * k as f64 * coeffs[k];
    }
    d[0] /= 2.0;
    d.truncate(n);
    Ok(d)
}

/// A Chebyshev series over a domain: the closed-form approximation of a
/// value function at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebPoly {
    pub domain: ChebDomain,
    pub coeffs: Vec<f64>,
}

impl ChebPoly {
    pub fn new(domain: ChebDomain, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "empty coefficient sequence"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coeffs", "coefficients must be finite"));
        }
        Ok(Self { domain, coeffs })
    }

    /// Interpolant of `values` given at the transformed Chebyshev points of
    /// `domain`.
    pub fn interpolate(domain: ChebDomain, values: &[f64]) -> Result<Self> {
        Self::new(domain, coefficients(values)?)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluates the polynomial at `x` inside the domain. Points outside are
    /// rejected; product-specific extension rules live in the pricer.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let z = self.domain.to_unit(x);
        if z.abs() > 1.0 + UNIT_EPS {
            return Err(Error::OutOfRange(format!(
                "x = {x} outside domain [{}, {}]",
                self.domain.lo, self.domain.hi
            )));
        }
        Ok(clenshaw_unchecked(&self.coeffs, z.clamp(-1.0, 1.0)))
    }

    /// Derivative with respect to `x` (chain factor applied once).
    pub fn derivative(&self) -> Result<ChebPoly> {
        let mut d = derivative_coeffs(&self.coeffs)?;
        let chain = 2.0 / self.domain.width();
        for c in &mut d {
            *c *= chain;
        }
        ChebPoly::new(self.domain, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn nodes_small_degrees() {
        assert_eq!(cheb_nodes(1).unwrap(), vec![1.0, -1.0]);
        assert_eq!(cheb_nodes(2).unwrap(), vec![1.0, 0.0, -1.0]);
        let n4 = cheb_nodes(4).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in n4.iter().zip([1.0, s, 0.0, -s, -1.0]) {
            assert_close(*got, want, 1e-15);
        }
    }

    #[test]
    fn nodes_reject_degenerate() {
        assert!(cheb_nodes(0).is_err());
    }

    #[test]
    fn nodes_strictly_decreasing() {
        let nodes = cheb_nodes(57).unwrap();
        assert_eq!(nodes.len(), 58);
        assert_eq!(nodes[0], 1.0);
        assert_eq!(nodes[57], -1.0);
        for w in nodes.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn unit_transform_examples() {
        let identity = ChebDomain::new(-1.0, 1.0).unwrap();
        assert_close(identity.from_unit(0.3), 0.3, 1e-15);

        let d = ChebDomain::new(0.0, 2.0).unwrap();
        assert_close(d.from_unit(-1.0), 0.0, 1e-15);
        assert_close(d.from_unit(1.0), 2.0, 1e-15);

        let log_dom = ChebDomain::new(0.2f64.ln(), 350f64.ln()).unwrap();
        let x = 100f64.ln();
        let expect = 1.0 - 2.0 * (350f64.ln() - x) / (350f64.ln() - 0.2f64.ln());
        assert_close(log_dom.to_unit(x), expect, 1e-15);
    }

    #[test]
    fn coefficients_constant_and_linear() {
        assert_eq!(coefficients(&[5.0, 5.0, 5.0]).unwrap(), vec![5.0, 0.0, 0.0]);
        // f(z) = z sampled at [1, -1] is T_1.
        let c = coefficients(&[1.0, -1.0]).unwrap();
        assert_close(c[0], 0.0, 1e-15);
        assert_close(c[1], 1.0, 1e-15);
    }

    #[test]
    fn coefficients_pick_out_basis_polynomial() {
        // T_3 sampled at the degree-5 nodes must give the unit vector at 3.
        let nodes = cheb_nodes(5).unwrap();
        let values: Vec<f64> = nodes.iter().map(|z| (3.0 * z.acos()).cos()).collect();
        let c = coefficients(&values).unwrap();
        for (j, cj) in c.iter().enumerate() {
            assert_close(*cj, if j == 3 { 1.0 } else { 0.0 }, 1e-14);
        }
    }

    #[test]
    fn coefficients_reject_short_input() {
        assert!(coefficients(&[1.0]).is_err());
    }

    #[test]
    fn clenshaw_examples() {
        assert_close(clenshaw(&[7.5], 0.3).unwrap(), 7.5, 0.0);
        // unit vector at index 3 evaluated at 0.5: T_3(0.5) = cos(pi) = -1
        assert_close(clenshaw(&[0.0, 0.0, 0.0, 1.0], 0.5).unwrap(), -1.0, 1e-15);
        // [1,1,1] at z=0: 1 + 0 + T_2(0) = 0
        assert_close(clenshaw(&[1.0, 1.0, 1.0], 0.0).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn clenshaw_rejects_exterior_points() {
        assert!(clenshaw(&[1.0, 2.0], 1.5).is_err());
        assert!(clenshaw(&[1.0, 2.0], -1.0 - 1e-9).is_err());
        // endpoint roundoff tolerated
        assert!(clenshaw(&[1.0, 2.0], 1.0 + 5e-13).is_ok());
    }

    #[test]
    fn clenshaw_matches_direct_formula() {
        // against sum of c_j cos(j acos z) for a few degrees up to 500
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for &n in &[3usize, 17, 150, 500] {
            let coeffs: Vec<f64> = (0..=n).map(|_| 2.0 * next() - 1.0).collect();
            for _ in 0..40 {
                let z = 2.0 * next() - 1.0;
                let direct: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * (j as f64 * z.acos()).cos())
                    .sum();
                let got = clenshaw(&coeffs, z).unwrap();
                let scale = coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
                assert_close(got, direct, 1e-12 * scale);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_nodal_values() {
        let dom = ChebDomain::new(-2.0, 3.0).unwrap();
        let nodes = dom.nodes(24).unwrap();
        let values: Vec<f64> = nodes.iter().map(|x| (x * 0.7).sin() + x * x).collect();
        let p = ChebPoly::interpolate(dom, &values).unwrap();
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, v) in nodes.iter().zip(&values) {
            assert_close(p.eval(*x).unwrap(), *v, 1e-12 * scale);
        }
    }

    #[test]
    fn eval_poly_examples() {
        let dom = ChebDomain::new(0.0, 2.0).unwrap();
        let p = ChebPoly::new(dom, vec![7.0]).unwrap();
        assert_close(p.eval(1.3).unwrap(), 7.0, 0.0);

        // degree-2 interpolation of x^2 is exact
        let nodes = dom.nodes(2).unwrap();
        let sq: Vec<f64> = nodes.iter().map(|x| x * x).collect();
        let p = ChebPoly::interpolate(dom, &sq).unwrap();
        assert_close(p.eval(1.5).unwrap(), 2.25, 1e-13);

        // exp on [-1,1] with N=20 is machine-accurate
        let dom = ChebDomain::new(-1.0, 1.0).unwrap();
        let nodes = dom.nodes(20).unwrap();
        let vals: Vec<f64> = nodes.iter().map(|x| x.exp()).collect();
        let p = ChebPoly::interpolate(dom, &vals).unwrap();
        assert_close(p.eval(0.4).unwrap(), 0.4f64.exp(), 1e-12);

        assert!(p.eval(1.7).is_err());
    }

    #[test]
    fn derivative_examples() {
        // T_1 -> [1]
        assert_eq!(derivative_coeffs(&[0.0, 1.0]).unwrap(), vec![1.0]);
        // T_2 -> 4 T_1
        assert_eq!(derivative_coeffs(&[0.0, 0.0, 1.0]).unwrap(), vec![0.0, 4.0]);
        // d/dz of exp approx matches exp interior
        let dom = ChebDomain::new(-1.0, 1.0).unwrap();
        let nodes = dom.nodes(20).unwrap();
        let vals: Vec<f64> = nodes.iter().map(|x| x.exp()).collect();
        let p = ChebPoly::interpolate(dom, &vals).unwrap();
        let dp = p.derivative().unwrap();
        for &x in &[-0.8, -0.3, 0.0, 0.45, 0.9] {
            assert_close(dp.eval(x).unwrap(), x.exp(), 1e-10);
        }
    }

    #[test]
    fn second_derivative_of_polynomial_is_exact() {
        // q(x) = 3x^4 - 2x^3 + x on [0.5, 2.5]; q'' = 36x^2 - 12x
        let dom = ChebDomain::new(0.5, 2.5).unwrap();
        let nodes = dom.nodes(9).unwrap();
        let vals: Vec<f64> = nodes
            .iter()
            .map(|&x| 3.0 * x.powi(4) - 2.0 * x.powi(3) + x)
            .collect();
        let p = ChebPoly::interpolate(dom, &vals).unwrap();
        let dd = p.derivative().unwrap().derivative().unwrap();
        for &x in &[0.7, 1.1, 1.9, 2.3] {
            assert_close(dd.eval(x).unwrap(), 36.0 * x * x - 12.0 * x, 1e-9);
        }
    }

    #[test]
    fn basis_row_matches_cos_formula() {
        let mut row = vec![0.0; 12];
        let z = -0.37;
        basis_row(z, &mut row);
        for (j, t) in row.iter().enumerate() {
            assert_close(*t, (j as f64 * z.acos()).cos(), 1e-13);
        }
    }
}
