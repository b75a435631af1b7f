//! Quenched environments: molecule counts and per-site rate multipliers.

mod model;

pub use model::*;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::LatticeShape;
use crate::rng::{poisson, stream, Purpose};

/// A realized environment on a lattice. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentField {
    shape: LatticeShape,
    zeta: Vec<u32>,
    q: Vec<f64>,
    p: Vec<f64>,
    seed: u64,
    model: EnvironmentModel,
}

/// Independent `Poisson(θ(x/N))` counts, drawn in site order from the
/// environment stream of `seed`.
pub fn sample_molecule_field(theta: &Profile, shape: LatticeShape, seed: u64) -> Vec<u32> {
    let mut rng = stream(seed, 0, Purpose::Environment);
    (0..shape.volume())
        .map(|x| {
            let mean = theta.eval(&shape.position(x)).max(0.0);
            poisson(&mut rng, mean).min(u32::MAX as u64) as u32
        })
        .collect()
}

impl EnvironmentField {
    /// Samples the environment for `model` on `shape`.
    pub fn sample(model: &EnvironmentModel, shape: LatticeShape, seed: u64) -> Result<Self> {
        model.validate(shape.d)?;
        let mut field = Self { shape, zeta: Vec::new(), q: Vec::new(), p: Vec::new(), seed, model: model.clone() };
        match model {
            EnvironmentModel::PoissonMolecules { theta, .. } => {
                field.zeta = sample_molecule_field(theta, shape, seed);
            }
            EnvironmentModel::Additive { q, .. } => {
                let mut rng = stream(seed, 0, Purpose::AdditiveNoise);
                field.q = match q {
                    QLaw::Uniform { .. } => {
                        let c = model.uniform_half_width(shape.d).unwrap_or(0.0);
                        (0..shape.volume()).map(|_| c * (2.0 * rng.random::<f64>() - 1.0)).collect()
                    }
                    QLaw::Discrete { values, weights } => {
                        let total: f64 = weights.iter().sum();
                        (0..shape.volume())
                            .map(|_| {
                                let mut r = rng.random::<f64>() * total;
                                for (v, w) in values.iter().zip(weights) {
                                    if r < *w {
                                        return *v;
                                    }
                                    r -= w;
                                }
                                *values.last().unwrap()
                            })
                            .collect()
                    }
                };
            }
        }
        field.p = field.compute_rates();
        field.check_bounds()?;
        Ok(field)
    }

    /// Environment with prescribed rates, mainly for tests and small oracles.
    pub fn from_rates(shape: LatticeShape, p: Vec<f64>, model: EnvironmentModel) -> Result<Self> {
        if p.len() != shape.volume() {
            return Err(Error::GridMismatch(format!("{} rates for {} sites", p.len(), shape.volume())));
        }
        let field = Self { shape, zeta: Vec::new(), q: Vec::new(), p, seed: 0, model };
        field.check_bounds()?;
        Ok(field)
    }

    /// Homogeneous environment `p ≡ rate`.
    pub fn homogeneous(shape: LatticeShape, rate: f64) -> Result<Self> {
        let model = EnvironmentModel::Additive {
            v: Profile::Constant { value: rate },
            q: QLaw::Discrete { values: vec![0.0], weights: vec![1.0] },
            a: rate * 0.5,
            b: rate * 2.0,
        };
        Self::from_rates(shape, vec![rate; shape.volume()], model)
    }

    /// Environment from given molecule counts.
    pub fn from_molecules(shape: LatticeShape, zeta: Vec<u32>, model: EnvironmentModel) -> Result<Self> {
        if zeta.len() != shape.volume() {
            return Err(Error::GridMismatch(format!("{} counts for {} sites", zeta.len(), shape.volume())));
        }
        let mut field = Self { shape, zeta, q: Vec::new(), p: Vec::new(), seed: 0, model };
        field.p = field.compute_rates();
        field.check_bounds()?;
        Ok(field)
    }

    fn compute_rates(&self) -> Vec<f64> {
        match &self.model {
            EnvironmentModel::PoissonMolecules { nu, chi0, .. } => {
                self.zeta.iter().map(|&z| nu + chi0 / (1.0 + z as f64)).collect()
            }
            EnvironmentModel::Additive { v, .. } => (0..self.shape.volume())
                .map(|x| v.eval(&self.shape.position(x)) + self.q[x])
                .collect(),
        }
    }

    fn check_bounds(&self) -> Result<()> {
        let (a, b) = self.model.bounds();
        let slack = 1e-12 * b.abs().max(1.0);
        for (site, &value) in self.p.iter().enumerate() {
            if !(value >= a - slack && value <= b + slack) {
                return Err(Error::RateOutOfBounds { site, value, a, b });
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    /// Molecule counts; empty for the additive model.
    pub fn zeta(&self) -> &[u32] {
        &self.zeta
    }

    /// Additive noise `q`; empty for the molecule model.
    pub fn noise(&self) -> &[f64] {
        &self.q
    }

    pub fn rates(&self) -> &[f64] {
        &self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    /// CSV with one row per site: coordinates, ζ (blank when absent), p.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for axis in 0..self.shape.d {
            out.push_str(&format!("x{},", axis + 1));
        }
        out.push_str("zeta,p\n");
        for x in 0..self.shape.volume() {
            for c in self.shape.coords(x) {
                out.push_str(&format!("{c},"));
            }
            match self.zeta.get(x) {
                Some(z) => out.push_str(&format!("{z},")),
                None => out.push(','),
            }
            out.push_str(&format!("{}\n", self.p[x]));
        }
        out
    }
}

/// Rate field of an environment, re-verified against the bounds.
pub fn build_rate_field(env: &EnvironmentField) -> Result<Vec<f64>> {
    let p = env.compute_rates();
    let (a, b) = env.model.bounds();
    let slack = 1e-12 * b.abs().max(1.0);
    for (site, &value) in p.iter().enumerate() {
        if !(value >= a - slack && value <= b + slack) {
            return Err(Error::RateOutOfBounds { site, value, a, b });
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(theta: f64, nu: f64, chi0: f64) -> EnvironmentModel {
        EnvironmentModel::PoissonMolecules { theta: Profile::Constant { value: theta }, nu, chi0 }
    }

    #[test]
    fn zero_theta_gives_empty_field() {
        let shape = LatticeShape::new(2, 16).unwrap();
        let env = EnvironmentField::sample(&flat(0.0, 0.5, 2.0), shape, 3).unwrap();
        assert!(env.zeta().iter().all(|&z| z == 0));
        assert!(env.rates().iter().all(|&p| p == 2.5));
    }

    #[test]
    fn molecule_mean_law_of_large_numbers() {
        let shape = LatticeShape::new(2, 1000).unwrap();
        let env = EnvironmentField::sample(&flat(5.0, 0.5, 2.0), shape, 11).unwrap();
        let mean = env.zeta().iter().map(|&z| z as f64).sum::<f64>() / 1e6;
        // sd of the mean is sqrt(5/1e6) ≈ 0.0022
        assert!((mean - 5.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let shape = LatticeShape::new(2, 40).unwrap();
        let m = EnvironmentModel::default_chemotaxis(2);
        let a = EnvironmentField::sample(&m, shape, 42).unwrap();
        let b = EnvironmentField::sample(&m, shape, 42).unwrap();
        assert_eq!(a, b);
        let c = EnvironmentField::sample(&m, shape, 43).unwrap();
        assert_ne!(a.zeta(), c.zeta());
    }

    #[test]
    fn rate_examples() {
        let shape = LatticeShape::new(1, 3).unwrap();
        let env = EnvironmentField::from_molecules(shape, vec![0, 3, 1_000_000], flat(1.0, 0.5, 2.0)).unwrap();
        let p = build_rate_field(&env).unwrap();
        assert_eq!(p[0], 2.5);
        assert_eq!(p[1], 1.0);
        assert!((p[2] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn response_is_decreasing() {
        let m = EnvironmentModel::default_chemotaxis(2);
        let shape = LatticeShape::new(2, 32).unwrap();
        let env = EnvironmentField::sample(&m, shape, 5).unwrap();
        let (z, p) = (env.zeta(), env.rates());
        for x in 0..shape.volume() {
            for y in (0..shape.volume()).step_by(37) {
                if z[x] >= z[y] {
                    assert!(p[x] <= p[y]);
                }
            }
        }
    }

    #[test]
    fn additive_noise_has_small_mean() {
        let model = EnvironmentModel::Additive {
            v: Profile::Cosine { mean: 1.5, amplitude: 0.2 },
            q: QLaw::Uniform { half_width: None },
            a: 1.0,
            b: 2.0,
        };
        let c = model.uniform_half_width(2).unwrap();
        assert!((c - 0.3).abs() < 1e-12);
        let sd = c / 3f64.sqrt();
        let mut ok = 0;
        for seed in 0..20 {
            let shape = LatticeShape::new(2, 64).unwrap();
            let env = EnvironmentField::sample(&model, shape, seed).unwrap();
            let mean = env.noise().iter().sum::<f64>() / shape.volume() as f64;
            if mean.abs() <= 3.0 * sd / 64.0 {
                ok += 1;
            }
            assert!(env.rates().iter().all(|&p| (1.0..=2.0).contains(&p)));
        }
        assert!(ok >= 19);
    }

    #[test]
    fn out_of_bounds_rates_rejected() {
        let shape = LatticeShape::new(1, 2).unwrap();
        let err = EnvironmentField::from_rates(shape, vec![1.0, 3.5], flat(1.0, 0.5, 2.0)).unwrap_err();
        assert!(matches!(err, Error::RateOutOfBounds { site: 1, .. }));
    }

    #[test]
    fn csv_has_one_row_per_site() {
        let shape = LatticeShape::new(2, 3).unwrap();
        let env = EnvironmentField::sample(&EnvironmentModel::default_chemotaxis(2), shape, 1).unwrap();
        let csv = env.to_csv();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("x1,x2,zeta,p\n"));
    }
}
