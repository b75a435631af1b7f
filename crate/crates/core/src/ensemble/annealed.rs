//! Environment-averaged density `R(u, φ) = E_m[M(φ/p)]`, its inverse `Φ(u, ·)`
//! and the harmonic mean `f̃(θ)`.

use super::grand::{density_derivative, density_m, Fugacity};
use super::rate::RateFunction;
use crate::environment::{EnvironmentModel, RateLaw};
use crate::error::{Error, Result};
use crate::rng::poisson_weights;

/// Absolute root-finding tolerance on `|R(u,φ) - ρ|`, scaled by `max(1, ρ)`.
pub const PHI_TOL: f64 = 1e-10;
const BISECTION_ITERS: usize = 200;
const NEWTON_POLISH_ITERS: usize = 4;

/// Supremum of admissible fugacities at a point: `radius(g) · inf p`.
pub fn fugacity_sup(g: &RateFunction, law: &RateLaw) -> f64 {
    g.convergence_radius().map_or(f64::INFINITY, |r| r * law.inf_rate)
}

fn check_admissible(g: &RateFunction, law: &RateLaw, phi: f64) -> Result<()> {
    let sup = fugacity_sup(g, law);
    if phi >= sup {
        return Err(Error::DivergentPartition { phi, radius: sup });
    }
    Ok(())
}

/// `R` against an already materialized site law.
pub fn annealed_r_law(g: &RateFunction, law: &RateLaw, phi: f64) -> Result<f64> {
    check_admissible(g, law, phi)?;
    if let Some(slope) = g.linear_slope() {
        return Ok(phi / slope * law.expect(|p| 1.0 / p));
    }
    law.try_expect(|p| density_m(g, phi / p))
}

/// `∂R/∂φ = E[M'(φ/p)/p]`.
pub fn annealed_r_derivative_law(g: &RateFunction, law: &RateLaw, phi: f64) -> Result<f64> {
    check_admissible(g, law, phi)?;
    if let Some(slope) = g.linear_slope() {
        return Ok(law.expect(|p| 1.0 / p) / slope);
    }
    law.try_expect(|p| Ok(density_derivative(g, phi / p)? / p))
}

/// `R(u, φ)`, the expected density at fugacity `φ` and macroscopic point `u`.
pub fn annealed_r(g: &RateFunction, env: &EnvironmentModel, u: &[f64], phi: f64) -> Result<f64> {
    annealed_r_law(g, &env.site_law(u), phi)
}

/// Largest density with a grand-canonical measure at this point (`∞` when unbounded).
pub fn critical_density_law(g: &RateFunction, law: &RateLaw) -> f64 {
    let sup = fugacity_sup(g, law);
    if !sup.is_finite() {
        return f64::INFINITY;
    }
    // R is increasing; approach the singular endpoint from below
    let mut best = 0.0;
    for k in 1..=12 {
        let phi = sup * (1.0 - 10f64.powi(-k));
        match annealed_r_law(g, law, phi) {
            Ok(r) => best = r,
            Err(_) => break,
        }
    }
    best
}

pub fn critical_density(g: &RateFunction, env: &EnvironmentModel, u: &[f64]) -> f64 {
    critical_density_law(g, &env.site_law(u))
}

/// `Φ(u, ρ)` against a materialized law, optionally warm-started.
///
/// Brackets the root by doubling (capped below the fugacity supremum), bisects,
/// then polishes with safeguarded Newton steps using the analytic derivative.
pub fn fugacity_phi_law(g: &RateFunction, law: &RateLaw, u: &[f64], rho: f64, guess: Option<f64>) -> Result<Fugacity> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Validation(format!("density must be finite and nonnegative, got {rho}")));
    }
    if rho == 0.0 {
        return Fugacity::new(0.0);
    }
    let tol = PHI_TOL * rho.max(1.0);
    if let Some(slope) = g.linear_slope() {
        // R is linear in φ; one Newton step from 0 is exact
        let dr = law.expect(|p| 1.0 / p) / slope;
        return Fugacity::new(rho / dr);
    }
    let sup = fugacity_sup(g, law);

    // warm start: Newton from the previous solution, fall back to bracketing
    if let Some(phi0) = guess.filter(|p| *p > 0.0 && *p < sup) {
        let mut phi = phi0;
        for _ in 0..8 {
            let r = annealed_r_law(g, law, phi)?;
            if (r - rho).abs() <= tol * 1e-3 {
                return Fugacity::new(phi);
            }
            let dr = annealed_r_derivative_law(g, law, phi)?;
            let next = phi - (r - rho) / dr;
            if !(next > 0.0 && next < sup) {
                break;
            }
            phi = next;
        }
    }

    let mut lo = 0.0;
    let mut hi = 1.0f64.min(0.5 * sup);
    let unreachable = || Error::DensityUnreachable {
        rho,
        critical: critical_density_law(g, law),
        u: u.to_vec(),
    };
    loop {
        let r = match annealed_r_law(g, law, hi) {
            Ok(r) => r,
            Err(Error::DivergentPartition { .. }) => return Err(unreachable()),
            Err(e) => return Err(e),
        };
        if r >= rho {
            break;
        }
        lo = hi;
        if sup.is_finite() {
            if hi >= sup * (1.0 - 1e-12) {
                return Err(unreachable());
            }
            hi = (2.0 * hi).min(0.5 * (hi + sup));
        } else {
            hi *= 2.0;
        }
    }
    let mut phi = 0.5 * (lo + hi);
    for _ in 0..BISECTION_ITERS {
        phi = 0.5 * (lo + hi);
        let r = annealed_r_law(g, law, phi)?;
        if (r - rho).abs() <= tol {
            break;
        }
        if r < rho {
            lo = phi;
        } else {
            hi = phi;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    for _ in 0..NEWTON_POLISH_ITERS {
        let r = annealed_r_law(g, law, phi)?;
        let dr = annealed_r_derivative_law(g, law, phi)?;
        let next = phi - (r - rho) / dr;
        if !(next >= lo && next <= hi) || next == phi {
            break;
        }
        phi = next;
    }
    Fugacity::new(phi)
}

/// `Φ(u, ρ)`, the inverse of `R(u, ·)`.
pub fn fugacity_phi(g: &RateFunction, env: &EnvironmentModel, u: &[f64], rho: f64) -> Result<Fugacity> {
    fugacity_phi_law(g, &env.site_law(u), u, rho, None)
}

/// `f̃(θ) = E_{Pois(θ)}[1/f(ζ)]⁻¹` for the molecule model.
///
/// Returns `None` for models without a molecule response.
pub fn harmonic_mean_ftilde(env: &EnvironmentModel, theta: f64) -> Option<f64> {
    let EnvironmentModel::PoissonMolecules { nu, chi0, .. } = env else {
        return None;
    };
    let weights = poisson_weights(theta.max(0.0), crate::environment::POISSON_TAIL, crate::environment::POISSON_MIN_TERMS);
    let mass: f64 = weights.iter().sum();
    let inv: f64 = weights
        .iter()
        .enumerate()
        .map(|(k, w)| w / (nu + chi0 / (1.0 + k as f64)))
        .sum();
    Some(mass / inv)
}

/// Effective diffusivity at `u`: the harmonic mean of the site law of `p`.
pub fn effective_diffusivity(env: &EnvironmentModel, u: &[f64]) -> f64 {
    match env {
        EnvironmentModel::PoissonMolecules { theta, .. } => {
            harmonic_mean_ftilde(env, theta.eval(u)).expect("molecule model")
        }
        EnvironmentModel::Additive { .. } => env.site_law(u).harmonic_mean(),
    }
}
