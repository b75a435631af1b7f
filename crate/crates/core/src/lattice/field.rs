use super::shape::LatticeShape;
use crate::error::{Error, Result};

/// Real-valued field on the cell centres of a uniform grid of the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub shape: LatticeShape,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(shape: LatticeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.volume() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                shape.volume()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn constant(shape: LatticeShape, value: f64) -> Self {
        Self { shape, values: vec![value; shape.volume()] }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(shape: LatticeShape, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..shape.volume()).map(|j| f(&shape.cell_center(j))).collect();
        Self { shape, values }
    }

    /// Grid spacing `1/M`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.shape.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.shape.d as i32)
    }

    /// Discrete mass `h^d Σ ρ`.
    pub fn mass(&self) -> f64 {
        self.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value of the cell containing torus point `u`.
    pub fn nearest(&self, u: &[f64]) -> f64 {
        let m = self.shape.n;
        let coords: Vec<usize> = u
            .iter()
            .map(|x| ((x.rem_euclid(1.0) * m as f64).floor() as usize).min(m - 1))
            .collect();
        self.values[self.shape.index(&coords)]
    }
}
