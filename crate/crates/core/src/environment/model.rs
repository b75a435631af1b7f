use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::poisson_weights;

/// Poisson expectations are truncated once this much mass is left in the tail.
pub const POISSON_TAIL: f64 = 1e-12;
/// Minimum number of terms in a truncated Poisson expectation.
pub const POISSON_MIN_TERMS: usize = 20;

/// A smooth closed-form function on the torus, used for θ(u), v(u) and ρ₀(u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `amplitude · exp(-width · Σᵢ (uᵢ - centerᵢ)²)` in raw coordinates `u ∈ [0,1)^d`.
    Gaussian {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
    },
    Constant { value: f64 },
    /// `mean + amplitude · cos(2π u₁)`.
    Cosine { mean: f64, amplitude: f64 },
}

impl Profile {
    /// The chemo-attractant bump `30 exp(-60 |u - (½,…,½)|²)`.
    pub fn default_bump(d: usize) -> Self {
        Profile::Gaussian { amplitude: 30.0, width: 60.0, center: vec![0.5; d] }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Profile::Gaussian { amplitude, width, center } => {
                let r2: f64 = u.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                amplitude * (-width * r2).exp()
            }
            Profile::Constant { value } => *value,
            Profile::Cosine { mean, amplitude } => mean + amplitude * (2.0 * std::f64::consts::PI * u[0]).cos(),
        }
    }

    /// Range of the profile over `[0,1)^d`.
    pub fn range(&self, d: usize) -> (f64, f64) {
        match self {
            Profile::Gaussian { amplitude, width, center } => {
                let far: f64 = center.iter().take(d).map(|c| c.max(1.0 - c).powi(2)).sum();
                let lo = amplitude * (-width * far).exp();
                (lo.min(*amplitude), lo.max(*amplitude))
            }
            Profile::Constant { value } => (*value, *value),
            Profile::Cosine { mean, amplitude } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if let Profile::Gaussian { center, width, amplitude } = self {
            if center.len() != d {
                return Err(Error::Validation(format!(
                    "gaussian center has {} coordinates, lattice has d = {d}",
                    center.len()
                )));
            }
            if !(width.is_finite() && amplitude.is_finite()) {
                return Err(Error::Validation("gaussian parameters must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Law of the ergodic part `q` of an additive environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QLaw {
    /// Uniform on `[-half_width, half_width]`; `None` picks the widest
    /// width that keeps every rate in `[a, b]`.
    Uniform { half_width: Option<f64> },
    /// Finite law; weights are normalized and the mean must vanish.
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

/// Law generating the quenched per-site rates `p(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentModel {
    /// `p(x) = ν + χ₀ / (1 + ζ(x))` with `ζ(x) ~ Poisson(θ(x/N))`.
    PoissonMolecules { theta: Profile, nu: f64, chi0: f64 },
    /// `p(x) = v(x/N) + q_x` with i.i.d. bounded zero-mean `q`.
    Additive { v: Profile, q: QLaw, a: f64, b: f64 },
}

/// A finitely supported law of `p` at one macroscopic point.
#[derive(Debug, Clone)]
pub struct RateLaw {
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
    /// Infimum of the support of the exact (untruncated) law.
    pub inf_rate: f64,
}

impl RateLaw {
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.rates.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub fn try_expect(&self, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (&p, &w) in self.rates.iter().zip(&self.weights) {
            if w > 0.0 {
                acc += w * f(p)?;
            }
        }
        Ok(acc)
    }

    /// Harmonic mean `E[1/p]⁻¹`.
    pub fn harmonic_mean(&self) -> f64 {
        1.0 / self.expect(|p| 1.0 / p)
    }
}

impl EnvironmentModel {
    /// The chemotaxis environment with ν = 0.5, χ₀ = 2 and the default bump.
    pub fn default_chemotaxis(d: usize) -> Self {
        EnvironmentModel::PoissonMolecules { theta: Profile::default_bump(d), nu: 0.5, chi0: 2.0 }
    }

    /// Lower and upper bounds `a < b` on every realized rate.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            EnvironmentModel::PoissonMolecules { nu, chi0, .. } => (*nu, nu + chi0),
            EnvironmentModel::Additive { a, b, .. } => (*a, *b),
        }
    }

    /// `f(ζ) = ν + χ₀/(1+ζ)` for the molecule model.
    pub fn response(&self, zeta: u32) -> Option<f64> {
        match self {
            EnvironmentModel::PoissonMolecules { nu, chi0, .. } => Some(nu + chi0 / (1.0 + zeta as f64)),
            EnvironmentModel::Additive { .. } => None,
        }
    }

    /// θ(u) for the molecule model, v(u) for the additive model.
    pub fn mean_profile(&self) -> &Profile {
        match self {
            EnvironmentModel::PoissonMolecules { theta, .. } => theta,
            EnvironmentModel::Additive { v, .. } => v,
        }
    }

    /// Half width of the uniform q law, resolving the automatic choice.
    pub fn uniform_half_width(&self, d: usize) -> Option<f64> {
        match self {
            EnvironmentModel::Additive { v, q: QLaw::Uniform { half_width }, a, b } => Some(half_width.unwrap_or_else(|| {
                let (vmin, vmax) = v.range(d);
                (vmin - a).min(b - vmax)
            })),
            _ => None,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.mean_profile().validate(d)?;
        match self {
            EnvironmentModel::PoissonMolecules { theta, nu, chi0 } => {
                if !(*nu > 0.0 && *chi0 >= 0.0) {
                    return Err(Error::Validation(format!("need nu > 0 and chi0 >= 0, got nu = {nu}, chi0 = {chi0}")));
                }
                let (lo, _) = theta.range(d);
                if lo < 0.0 {
                    return Err(Error::Validation("theta must be nonnegative".into()));
                }
            }
            EnvironmentModel::Additive { v, q, a, b } => {
                if !(0.0 < *a && a < b) {
                    return Err(Error::Validation(format!("need 0 < a < b, got a = {a}, b = {b}")));
                }
                let (vmin, vmax) = v.range(d);
                let (qmin, qmax) = match q {
                    QLaw::Uniform { .. } => {
                        let c = self.uniform_half_width(d).unwrap_or(0.0);
                        if c < 0.0 {
                            return Err(Error::Validation(format!("v range [{vmin}, {vmax}] does not fit in [{a}, {b}]")));
                        }
                        (-c, c)
                    }
                    QLaw::Discrete { values, weights } => {
                        if values.is_empty() || values.len() != weights.len() || weights.iter().any(|w| *w < 0.0) {
                            return Err(Error::Validation("discrete q law needs matching nonnegative weights".into()));
                        }
                        let total: f64 = weights.iter().sum();
                        let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
                        if mean.abs() > 1e-12 {
                            return Err(Error::Validation(format!("q law must have zero mean, got {mean}")));
                        }
                        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (lo, hi)
                    }
                };
                if vmin + qmin < *a - 1e-12 || vmax + qmax > *b + 1e-12 {
                    return Err(Error::Validation(format!(
                        "rates v + q span [{}, {}], outside [{a}, {b}]",
                        vmin + qmin,
                        vmax + qmax
                    )));
                }
            }
        }
        Ok(())
    }

    /// Law of `p` at macroscopic point `u`.
    ///
    /// Poisson laws are truncated at cumulative mass `1 - 1e-12` and
    /// renormalized; a uniform `q` is integrated with composite Gauss–Legendre.
    pub fn site_law(&self, u: &[f64]) -> RateLaw {
        match self {
            EnvironmentModel::PoissonMolecules { theta, nu, chi0 } => {
                let th = theta.eval(u).max(0.0);
                let mut weights = poisson_weights(th, POISSON_TAIL, POISSON_MIN_TERMS);
                let mass: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= mass);
                let rates = (0..weights.len()).map(|k| nu + chi0 / (1.0 + k as f64)).collect();
                let inf_rate = if th > 0.0 { *nu } else { nu + chi0 };
                RateLaw { rates, weights, inf_rate }
            }
            EnvironmentModel::Additive { v, q, .. } => {
                let vu = v.eval(u);
                match q {
                    QLaw::Uniform { .. } => {
                        let c = self.uniform_half_width(u.len()).unwrap_or(0.0);
                        if c <= 0.0 {
                            return RateLaw { rates: vec![vu], weights: vec![1.0], inf_rate: vu };
                        }
                        let (nodes, w) = gauss_legendre_composite(vu - c, vu + c, 4, 16);
                        let total: f64 = w.iter().sum();
                        RateLaw {
                            rates: nodes,
                            weights: w.into_iter().map(|x| x / total).collect(),
                            inf_rate: vu - c,
                        }
                    }
                    QLaw::Discrete { values, weights } => {
                        let total: f64 = weights.iter().sum();
                        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                        RateLaw {
                            rates: values.iter().map(|q| vu + q).collect(),
                            weights: weights.iter().map(|w| w / total).collect(),
                            inf_rate: vu + lo,
                        }
                    }
                }
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn gauss_legendre_composite(lo: f64, hi: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let width = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let mid = lo + (k as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + 0.5 * width * xi);
            weights.push(0.5 * width * wi);
        }
    }
    (nodes, weights)
}
