//! One-site grand-canonical quantities: `Z(φ)`, the marginal `φⁿ / (Z g(n)!)`
//! and its moments.

use super::rate::{ln_g_factorial, RateFunction};
use crate::error::{Error, Result};

/// Relative truncation target for the partition series.
pub const SERIES_TOL: f64 = 1e-13;
/// Hard cap on series terms; exceeding it is reported as divergence.
pub const SERIES_MAX_TERMS: usize = 100_000;

/// A nonnegative fugacity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Fugacity(f64);

impl Fugacity {
    pub fn new(phi: f64) -> Result<Self> {
        if phi >= 0.0 && phi.is_finite() {
            Ok(Self(phi))
        } else {
            Err(Error::Validation(format!("fugacity must be finite and nonnegative, got {phi}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True when `Z(φ)` converges for `g`.
    pub fn admissible_for(self, g: &RateFunction) -> bool {
        g.convergence_radius().is_none_or(|r| self.0 < r)
    }
}

/// Normalization and first two moments of the one-site marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteMoments {
    pub ln_z: f64,
    pub mean: f64,
    pub variance: f64,
    pub terms: usize,
}

/// Sums the partition series and its first two moments in one pass.
///
/// Terms are accumulated against a running log-scale so large fugacities do
/// not overflow. Summation stops once the current term and the ratio-test
/// geometric bound on the remaining tail are below [`SERIES_TOL`] relative to
/// each partial sum.
pub fn site_moments(g: &RateFunction, phi: f64) -> Result<SiteMoments> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(Error::Validation(format!("fugacity must be finite and nonnegative, got {phi}")));
    }
    if phi == 0.0 {
        return Ok(SiteMoments { ln_z: 0.0, mean: 0.0, variance: 0.0, terms: 1 });
    }
    if let Some(radius) = g.convergence_radius() {
        if phi >= radius {
            return Err(Error::DivergentPartition { phi, radius });
        }
    }
    let ln_phi = phi.ln();
    let mut shift = 0.0; // sums are stored as actual · exp(-shift)
    let mut s0 = 1.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut ln_term = 0.0;
    for n in 1..SERIES_MAX_TERMS {
        let gn = g.eval(n as u32);
        ln_term += ln_phi - gn.ln();
        if ln_term > shift {
            let scale = (shift - ln_term).exp();
            s0 *= scale;
            s1 *= scale;
            s2 *= scale;
            shift = ln_term;
        }
        let t = (ln_term - shift).exp();
        let nf = n as f64;
        s0 += t;
        s1 += nf * t;
        s2 += nf * nf * t;

        let ratio = phi / g.eval(n as u32 + 1);
        let r1 = ratio * (nf + 1.0) / nf;
        let r2 = r1 * (nf + 1.0) / nf;
        if r2 < 1.0 {
            let tail0 = t * ratio / (1.0 - ratio);
            let tail1 = nf * t * r1 / (1.0 - r1);
            let tail2 = nf * nf * t * r2 / (1.0 - r2);
            if t <= SERIES_TOL * s0
                && tail0 <= SERIES_TOL * s0
                && tail1 <= SERIES_TOL * s1
                && tail2 <= SERIES_TOL * s2
            {
                let mean = s1 / s0;
                let variance = (s2 / s0 - mean * mean).max(0.0);
                return Ok(SiteMoments { ln_z: shift + s0.ln(), mean, variance, terms: n + 1 });
            }
        }
    }
    Err(Error::DivergentPartition {
        phi,
        radius: g.convergence_radius().unwrap_or(f64::INFINITY),
    })
}

/// `Z(φ) = Σ φⁿ / g(n)!`.
pub fn partition_z(g: &RateFunction, phi: f64) -> Result<f64> {
    Ok(site_moments(g, phi)?.ln_z.exp())
}

/// Marginal mass `φⁿ / (Z(φ) g(n)!)` of occupation `n`.
pub fn site_pmf(g: &RateFunction, phi: f64, n: u32) -> Result<f64> {
    let m = site_moments(g, phi)?;
    Ok(pmf_from_moments(g, phi, n, &m))
}

pub(crate) fn pmf_from_moments(g: &RateFunction, phi: f64, n: u32, m: &SiteMoments) -> f64 {
    if phi == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * phi.ln() - ln_g_factorial(g, n) - m.ln_z).exp()
}

/// Density `M(φ)`, the mean occupation under the one-site marginal.
pub fn density_m(g: &RateFunction, phi: f64) -> Result<f64> {
    Ok(site_moments(g, phi)?.mean)
}

/// `M'(φ) = Var(η)/φ`, with `M'(0) = 1/g(1)`.
pub fn density_derivative(g: &RateFunction, phi: f64) -> Result<f64> {
    if phi == 0.0 {
        return Ok(1.0 / g.eval(1));
    }
    Ok(site_moments(g, phi)?.variance / phi)
}

/// Mean of `g(η)` under the marginal; equals `φ` whenever `Z` converges.
pub fn expected_rate(g: &RateFunction, phi: f64, n_max: u32) -> Result<f64> {
    let m = site_moments(g, phi)?;
    Ok((1..=n_max).map(|n| g.eval(n) * pmf_from_moments(g, phi, n, &m)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force partial sum with a fixed, generous number of terms.
    fn brute_z(g: &RateFunction, phi: f64, terms: u32) -> f64 {
        let mut t = 1.0;
        let mut s = 1.0;
        for n in 1..terms {
            t *= phi / g.eval(n);
            s += t;
        }
        s
    }

    #[test]
    fn partition_examples() {
        let id = RateFunction::identity();
        assert_eq!(partition_z(&id, 0.0).unwrap(), 1.0);
        let z = partition_z(&id, 1.5).unwrap();
        assert!((z - 1.5f64.exp()).abs() <= 1e-13 * z);
        assert!((z - brute_z(&id, 1.5, 200)).abs() <= 1e-13 * z);
        let c = RateFunction::constant(3.0);
        assert!((partition_z(&c, 1.0).unwrap() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn divergence_is_reported() {
        let c = RateFunction::constant(3.0);
        assert!(matches!(partition_z(&c, 3.0), Err(Error::DivergentPartition { .. })));
        assert!(matches!(partition_z(&c, 4.0), Err(Error::DivergentPartition { .. })));
        // a bounded table behaves like the constant case beyond its last entry
        let b = RateFunction::table(vec![0.0, 1.0, 2.0], 0.0).unwrap();
        assert!(partition_z(&b, 1.9).is_ok());
        assert!(partition_z(&b, 2.0).is_err());
    }

    #[test]
    fn pmf_examples() {
        let id = RateFunction::identity();
        assert!((site_pmf(&id, 2.0, 0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(site_pmf(&id, 0.0, 0).unwrap(), 1.0);
        assert_eq!(site_pmf(&RateFunction::constant(3.0), 0.0, 0).unwrap(), 1.0);
        let c = RateFunction::constant(3.0);
        assert!((site_pmf(&c, 1.0, 2).unwrap() - (1.0 / 9.0) / 1.5).abs() < 1e-15);
    }

    #[test]
    fn density_examples() {
        let id = RateFunction::identity();
        for k in 1..=50 {
            let phi = 0.1 * k as f64;
            assert!((density_m(&id, phi).unwrap() - phi).abs() <= 1e-12);
        }
        assert_eq!(density_m(&id, 0.0).unwrap(), 0.0);
        let c = RateFunction::constant(3.0);
        assert!((density_m(&c, 1.0).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn large_fugacity_does_not_overflow() {
        let id = RateFunction::identity();
        let m = site_moments(&id, 900.0).unwrap();
        assert!((m.ln_z - 900.0).abs() < 1e-9);
        assert!((m.mean - 900.0).abs() < 1e-9);
        assert!((m.variance - 900.0).abs() < 1e-7);
    }

    #[test]
    fn poisson_marginal_for_linear_rate() {
        let id = RateFunction::identity();
        for &phi in &[0.3, 1.0, 4.5, 12.0] {
            let mut p = f64::exp(-phi);
            for n in 0..60u32 {
                if n > 0 {
                    p *= phi / n as f64;
                }
                let got = site_pmf(&id, phi, n).unwrap();
                assert!((got - p).abs() <= 1e-12, "phi {phi} n {n}: {got} vs {p}");
            }
        }
    }

    #[test]
    fn expected_rate_is_fugacity() {
        let t = RateFunction::table(vec![0.0, 2.0, 3.0], 1.0).unwrap();
        for &phi in &[0.5, 2.0, 7.0] {
            assert!((expected_rate(&t, phi, 200).unwrap() - phi).abs() < 1e-11);
        }
    }

    #[test]
    fn density_derivative_matches_finite_difference() {
        let t = RateFunction::table(vec![0.0, 2.0, 3.0], 1.0).unwrap();
        for &phi in &[0.2, 1.0, 5.0] {
            let h = 1e-5;
            let fd = (density_m(&t, phi + h).unwrap() - density_m(&t, phi - h).unwrap()) / (2.0 * h);
            assert!((density_derivative(&t, phi).unwrap() - fd).abs() < 1e-7);
        }
    }
}
