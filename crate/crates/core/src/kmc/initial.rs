use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentField, Profile};
use crate::error::{Error, Result};
use crate::lattice::{LatticeShape, ParticleConfig};
use crate::rng::{poisson, stream, Purpose};

/// How the particle configuration at time 0 is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `η ≡ value`.
    Uniform { value: u32 },
    /// Independent `Poisson(ρ₀(x/N))` occupations.
    PoissonProfile { profile: Profile },
    /// Independent `Poisson(φ/p(x))` occupations: the grand-canonical
    /// product measure for `g(n) = n` in the realized environment.
    QuenchedEquilibrium { fugacity: f64 },
    /// `count` particles on the site nearest to `at`.
    PointMass { at: Vec<f64>, count: u32 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Uniform { value: 4 }
    }
}

impl InitialCondition {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            InitialCondition::Uniform { .. } => Ok(()),
            InitialCondition::PoissonProfile { profile } => {
                profile.validate(d)?;
                if profile.range(d).0 < 0.0 {
                    return Err(Error::Validation("initial profile must be nonnegative".into()));
                }
                Ok(())
            }
            InitialCondition::QuenchedEquilibrium { fugacity } => {
                if !(*fugacity >= 0.0 && fugacity.is_finite()) {
                    return Err(Error::Validation(format!("fugacity must be nonnegative, got {fugacity}")));
                }
                Ok(())
            }
            InitialCondition::PointMass { at, .. } => {
                if at.len() != d {
                    return Err(Error::Validation(format!("point mass location needs {d} coordinates")));
                }
                Ok(())
            }
        }
    }

    /// Macroscopic initial density `ρ₀(u)`, when it is deterministic in `u`.
    pub fn macroscopic_density(&self, env: Option<&crate::environment::EnvironmentModel>) -> Option<Box<dyn Fn(&[f64]) -> f64 + '_>> {
        match self {
            InitialCondition::Uniform { value } => {
                let v = *value as f64;
                Some(Box::new(move |_| v))
            }
            InitialCondition::PoissonProfile { profile } => Some(Box::new(move |u| profile.eval(u))),
            InitialCondition::QuenchedEquilibrium { fugacity } => {
                let env = env?.clone();
                let phi = *fugacity;
                Some(Box::new(move |u| phi * env.site_law(u).expect(|p| 1.0 / p)))
            }
            InitialCondition::PointMass { .. } => None,
        }
    }

    /// Draws the configuration for `replica` from the initial-condition stream.
    pub fn build(&self, shape: LatticeShape, env: &EnvironmentField, seed: u64, replica: u64) -> Result<ParticleConfig> {
        self.validate(shape.d)?;
        let mut rng = stream(seed, replica, Purpose::Initial);
        let draw = |rng: &mut _, mean: f64| -> Result<u32> {
            let k = poisson(rng, mean);
            u32::try_from(k).map_err(|_| Error::Validation(format!("initial occupation {k} overflows")))
        };
        match self {
            InitialCondition::Uniform { value } => Ok(ParticleConfig::uniform(shape, *value)),
            InitialCondition::PoissonProfile { profile } => {
                let eta = (0..shape.volume())
                    .map(|x| draw(&mut rng, profile.eval(&shape.position(x)).max(0.0)))
                    .collect::<Result<Vec<_>>>()?;
                ParticleConfig::from_occupations(shape, eta)
            }
            InitialCondition::QuenchedEquilibrium { fugacity } => {
                let eta = env.rates().iter().map(|p| draw(&mut rng, fugacity / p)).collect::<Result<Vec<_>>>()?;
                ParticleConfig::from_occupations(shape, eta)
            }
            InitialCondition::PointMass { at, count } => {
                let coords: Vec<usize> = at
                    .iter()
                    .map(|u| (u.rem_euclid(1.0) * shape.n as f64).round() as usize % shape.n)
                    .collect();
                let mut cfg = ParticleConfig::empty(shape);
                cfg.add(shape.index(&coords), *count);
                Ok(cfg)
            }
        }
    }
}
