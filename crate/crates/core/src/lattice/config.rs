use super::shape::LatticeShape;
use crate::error::{Error, Result};

/// Occupation numbers on a periodic lattice with a cached particle count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleConfig {
    shape: LatticeShape,
    eta: Vec<u32>,
    total: u64,
}

impl ParticleConfig {
    pub fn empty(shape: LatticeShape) -> Self {
        Self { shape, eta: vec![0; shape.volume()], total: 0 }
    }

    pub fn uniform(shape: LatticeShape, value: u32) -> Self {
        Self { shape, eta: vec![value; shape.volume()], total: value as u64 * shape.volume() as u64 }
    }

    pub fn from_occupations(shape: LatticeShape, eta: Vec<u32>) -> Result<Self> {
        if eta.len() != shape.volume() {
            return Err(Error::GridMismatch(format!(
                "{} occupations for a lattice of {} sites",
                eta.len(),
                shape.volume()
            )));
        }
        let total = eta.iter().map(|&n| n as u64).sum();
        Ok(Self { shape, eta, total })
    }

    #[inline]
    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    #[inline]
    pub fn occupations(&self) -> &[u32] {
        &self.eta
    }

    #[inline]
    pub fn get(&self, site: usize) -> u32 {
        self.eta[site]
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn add(&mut self, site: usize, count: u32) {
        self.eta[site] += count;
        self.total += count as u64;
    }

    /// Moves one particle from `from` to `to`; the total is unchanged.
    #[inline]
    pub fn move_particle(&mut self, from: usize, to: usize) {
        debug_assert!(self.eta[from] > 0);
        self.eta[from] -= 1;
        self.eta[to] += 1;
    }

    /// Recounts all particles; true when the cached total is consistent.
    pub fn audit(&self) -> bool {
        self.eta.iter().map(|&n| n as u64).sum::<u64>() == self.total
    }

    /// Site holding the most particles (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &n) in self.eta.iter().enumerate() {
            if n > self.eta[best] {
                best = i;
            }
        }
        best
    }
}
