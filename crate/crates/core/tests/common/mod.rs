//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Number of Fourier modes in the reference solution.
pub const MODES: usize = 256;

/// Periodic Gaussian `Σₖ exp(−w (u − c + k)²)` on the unit circle.
pub fn periodic_gaussian(u: f64, center: f64, width: f64) -> f64 {
    (-3..=3).map(|k| (-width * (u - center + k as f64).powi(2)).exp()).sum()
}

/// Fourier reference for `∂ₜρ = κ ∂ᵤ²ρ` on the circle.
///
/// The initial profile is sampled on `MODES` points; each mode decays
/// by `exp(−4π²m²κt)`.
pub struct SpectralHeat1d {
    /// `(m, cos coefficient, sin coefficient)`.
    coeffs: Vec<(f64, f64, f64)>,
    kappa: f64,
}

impl SpectralHeat1d {
    pub fn new(f: impl Fn(f64) -> f64, kappa: f64) -> Self {
        let n = MODES;
        let samples: Vec<f64> = (0..n).map(|k| f(k as f64 / n as f64)).collect();
        let mut coeffs = Vec::new();
        for m in 0..=n / 2 {
            let (mut a, mut b) = (0.0, 0.0);
            for (k, s) in samples.iter().enumerate() {
                let arg = 2.0 * PI * (m * k) as f64 / n as f64;
                a += s * arg.cos();
                b += s * arg.sin();
            }
            let scale = if m == 0 || m == n / 2 { 1.0 } else { 2.0 } / n as f64;
            coeffs.push((m as f64, a * scale, b * scale));
        }
        Self { coeffs, kappa }
    }

    pub fn eval(&self, u: f64, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, a, b)| {
                let decay = (-4.0 * PI * PI * m * m * self.kappa * t).exp();
                let arg = 2.0 * PI * m * u;
                decay * (a * arg.cos() + b * arg.sin())
            })
            .sum()
    }
}

/// `log₂(coarse / fine)` for errors on grids refined by a factor two.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
