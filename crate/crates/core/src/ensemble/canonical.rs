//! Canonical measures on small boxes by exact enumeration, and the gap
//! between canonical and grand-canonical expectations.

use super::annealed::fugacity_phi_law;
use super::grand::{pmf_from_moments, site_moments};
use super::rate::{ln_g_factorial, RateFunction};
use crate::environment::RateLaw;
use crate::error::{Error, Result};

/// Box rates and particle count defining a canonical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSpec {
    pub box_sites: Vec<f64>,
    pub total_particles: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationCaps {
    pub max_sites: usize,
    pub max_particles: u32,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        Self { max_sites: 6, max_particles: 20 }
    }
}

/// Exact distribution over all configurations of the box with `K` particles.
#[derive(Debug, Clone)]
pub struct CanonicalDistribution {
    pub configs: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
}

impl CanonicalDistribution {
    pub fn expect(&self, mut f: impl FnMut(&[u32]) -> f64) -> f64 {
        self.configs.iter().zip(&self.probs).map(|(c, p)| p * f(c)).sum()
    }

    pub fn total_variation(&self, other: &CanonicalDistribution) -> f64 {
        debug_assert_eq!(self.configs, other.configs);
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// All compositions of `total` into `sites` ordered parts, in lexicographic order.
pub fn compositions(sites: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, sites: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == sites {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(prefix, sites, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if sites > 0 {
        rec(&mut Vec::with_capacity(sites), sites, total, &mut out);
    }
    out
}

impl CanonicalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.box_sites.is_empty() {
            return Err(Error::Validation("canonical box needs at least one site".into()));
        }
        if self.box_sites.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Validation("box rates must be positive".into()));
        }
        Ok(())
    }

    fn as_law(&self) -> RateLaw {
        let n = self.box_sites.len() as f64;
        RateLaw {
            rates: self.box_sites.clone(),
            weights: vec![1.0 / n; self.box_sites.len()],
            inf_rate: self.box_sites.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Finite-box fugacity `φ^p_K`: the box-averaged grand-canonical density equals `K/|Λ|`.
    pub fn box_fugacity(&self, g: &RateFunction) -> Result<f64> {
        let rho = self.total_particles as f64 / self.box_sites.len() as f64;
        Ok(fugacity_phi_law(g, &self.as_law(), &[], rho, None)?.value())
    }
}

/// Grand-canonical product measure on the box conditioned on `Σ η = K`,
/// computed with reference fugacity `phi`.
pub fn canonical_pmf_with(
    g: &RateFunction,
    spec: &CanonicalSpec,
    phi: f64,
    caps: EnumerationCaps,
) -> Result<CanonicalDistribution> {
    spec.validate()?;
    if spec.box_sites.len() > caps.max_sites || spec.total_particles > caps.max_particles {
        return Err(Error::EnumerationTooLarge {
            sites: spec.box_sites.len(),
            particles: spec.total_particles,
            max_sites: caps.max_sites,
            max_particles: caps.max_particles,
        });
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Validation(format!("reference fugacity must be positive, got {phi}")));
    }
    let configs = compositions(spec.box_sites.len(), spec.total_particles);
    let ln_fug: Vec<f64> = spec.box_sites.iter().map(|p| (phi / p).ln()).collect();
    let max_n = spec.total_particles as usize;
    let ln_fact: Vec<f64> = (0..=max_n).map(|n| ln_g_factorial(g, n as u32)).collect();
    let ln_w: Vec<f64> = configs
        .iter()
        .map(|c| c.iter().zip(&ln_fug).map(|(&n, lf)| n as f64 * lf - ln_fact[n as usize]).sum())
        .collect();
    let top = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ln_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(CanonicalDistribution { configs, probs: w.into_iter().map(|x| x / total).collect() })
}

/// Canonical measure with the default caps and reference fugacity 1.
pub fn canonical_pmf(g: &RateFunction, spec: &CanonicalSpec) -> Result<CanonicalDistribution> {
    canonical_pmf_with(g, spec, 1.0, EnumerationCaps::default())
}

/// Observable depending on the occupations of a few box sites.
pub struct Observable<'a> {
    pub sites: Vec<usize>,
    pub eval: Box<dyn Fn(&[u32]) -> f64 + 'a>,
}

impl<'a> Observable<'a> {
    pub fn new(sites: Vec<usize>, eval: impl Fn(&[u32]) -> f64 + 'a) -> Self {
        Self { sites, eval: Box::new(eval) }
    }
}

const GC_TAIL: f64 = 1e-15;
const GC_MAX_STATES: usize = 10_000_000;

/// `|E_canonical[F] − E_{ν_{φ^p_K}}[F]|` on the box.
pub fn equivalence_gap(g: &RateFunction, spec: &CanonicalSpec, observable: &Observable) -> Result<f64> {
    let canon = canonical_pmf(g, spec)?;
    let mut scratch = vec![0u32; observable.sites.len()];
    let e_canon = canon.expect(|c| {
        for (s, &i) in scratch.iter_mut().zip(&observable.sites) {
            *s = c[i];
        }
        (observable.eval)(&scratch)
    });

    let phi = spec.box_fugacity(g)?;
    // one-site marginals of the inner sites, truncated deep in the tail
    let mut marginals: Vec<Vec<f64>> = Vec::with_capacity(observable.sites.len());
    for &i in &observable.sites {
        let z = phi / spec.box_sites[i];
        let m = site_moments(g, z)?;
        let mut pm = Vec::new();
        let mut cum = 0.0;
        let mut n = 0u32;
        while cum < 1.0 - GC_TAIL && n < 5000 {
            let w = pmf_from_moments(g, z, n, &m);
            pm.push(w);
            cum += w;
            n += 1;
        }
        marginals.push(pm);
    }
    let states: usize = marginals.iter().map(Vec::len).product();
    if states > GC_MAX_STATES {
        return Err(Error::EnumerationTooLarge {
            sites: observable.sites.len(),
            particles: marginals.iter().map(|m| m.len() as u32).max().unwrap_or(0),
            max_sites: observable.sites.len(),
            max_particles: 0,
        });
    }
    let mut e_gc = 0.0;
    let mut idx = vec![0usize; marginals.len()];
    for _ in 0..states {
        let mut w = 1.0;
        for (k, &n) in idx.iter().enumerate() {
            w *= marginals[k][n];
            scratch[k] = n as u32;
        }
        e_gc += w * (observable.eval)(&scratch);
        for k in 0..idx.len() {
            idx[k] += 1;
            if idx[k] < marginals[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok((e_canon - e_gc).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_count() {
        // C(K + L - 1, L - 1)
        assert_eq!(compositions(3, 2).len(), 6);
        assert_eq!(compositions(6, 20).len(), 53130);
        assert!(compositions(4, 5).iter().all(|c| c.iter().sum::<u32>() == 5));
    }

    #[test]
    fn pmf_examples() {
        let id = RateFunction::identity();
        let d = canonical_pmf(&id, &CanonicalSpec { box_sites: vec![1.0, 1.0], total_particles: 1 }).unwrap();
        assert!(d.probs.iter().all(|p| (p - 0.5).abs() < 1e-15));

        let d = canonical_pmf(&id, &CanonicalSpec { box_sites: vec![1.0, 2.0], total_particles: 1 }).unwrap();
        // configs are (1,0), (0,1)
        assert_eq!(d.configs, vec![vec![1, 0], vec![0, 1]]);
        assert!((d.probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs[1] - 1.0 / 3.0).abs() < 1e-15);

        let c = RateFunction::constant(3.0);
        let d = canonical_pmf(&c, &CanonicalSpec { box_sites: vec![1.0; 3], total_particles: 2 }).unwrap();
        assert_eq!(d.probs.len(), 6);
        assert!(d.probs.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn caps_are_enforced() {
        let id = RateFunction::identity();
        let too_many_sites = CanonicalSpec { box_sites: vec![1.0; 7], total_particles: 2 };
        assert!(matches!(canonical_pmf(&id, &too_many_sites), Err(Error::EnumerationTooLarge { .. })));
        let too_many_particles = CanonicalSpec { box_sites: vec![1.0; 2], total_particles: 21 };
        assert!(matches!(canonical_pmf(&id, &too_many_particles), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn independent_of_reference_fugacity() {
        let g = RateFunction::table(vec![0.0, 2.0, 3.0], 1.0).unwrap();
        let spec = CanonicalSpec { box_sites: vec![0.7, 1.9, 1.1, 2.4], total_particles: 9 };
        let a = canonical_pmf_with(&g, &spec, 0.3, EnumerationCaps::default()).unwrap();
        let b = canonical_pmf_with(&g, &spec, 7.5, EnumerationCaps::default()).unwrap();
        assert!(a.total_variation(&b) < 1e-12);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_examples() {
        let id = RateFunction::identity();
        let spec = CanonicalSpec { box_sites: vec![1.0, 1.0], total_particles: 2 };
        let one = Observable::new(vec![0], |_| 1.0);
        assert!(equivalence_gap(&id, &spec, &one).unwrap() < 1e-13);
        let occ = Observable::new(vec![0], |c| c[0] as f64);
        assert!(equivalence_gap(&id, &spec, &occ).unwrap() < 1e-12);
    }
}
