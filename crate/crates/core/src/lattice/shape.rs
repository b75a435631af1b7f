use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A periodic `d`-dimensional lattice of side `n`.
///
/// Sites are numbered with the first coordinate varying fastest; site `x`
/// sits at the macroscopic point `x/n` of the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeShape {
    pub d: usize,
    pub n: usize,
}

impl LatticeShape {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::Validation(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if n == 0 {
            return Err(Error::Validation("lattice side must be positive".into()));
        }
        n.checked_pow(d as u32)
            .filter(|v| *v <= u32::MAX as usize)
            .ok_or_else(|| Error::Validation(format!("lattice {n}^{d} too large")))?;
        Ok(Self { d, n })
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            c.push(site % self.n);
            site /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.n + c % self.n)
    }

    /// Index of the site displaced by a signed integer vector, with wraparound.
    pub fn offset(&self, site: usize, delta: &[i64]) -> usize {
        let n = self.n as i64;
        let mut out = 0usize;
        let mut rest = site;
        for (axis, dx) in delta.iter().enumerate() {
            let c = (rest % self.n) as i64;
            rest /= self.n;
            let shifted = (c + dx).rem_euclid(n) as usize;
            out += shifted * self.stride(axis);
        }
        out
    }

    /// Neighbor in direction `dir ∈ 0..2d`: axis `dir/2`, `+1` for even `dir`.
    #[inline]
    pub fn neighbor(&self, site: usize, dir: usize) -> usize {
        let axis = dir >> 1;
        let stride = self.stride(axis);
        let c = (site / stride) % self.n;
        if dir & 1 == 0 {
            if c + 1 == self.n {
                site + stride - self.n * stride
            } else {
                site + stride
            }
        } else if c == 0 {
            site + (self.n - 1) * stride
        } else {
            site - stride
        }
    }

    #[inline]
    pub fn directions(&self) -> usize {
        2 * self.d
    }

    /// Macroscopic position `x/n`.
    pub fn position(&self, site: usize) -> Vec<f64> {
        self.coords(site).into_iter().map(|c| c as f64 / self.n as f64).collect()
    }

    /// Centre `(j + ½)/n` of grid cell `site` when the shape is used as a PDE grid.
    pub fn cell_center(&self, site: usize) -> Vec<f64> {
        self.coords(site).into_iter().map(|c| (c as f64 + 0.5) / self.n as f64).collect()
    }

    /// Sup-norm box offsets `|y - x|_∞ ≤ l`.
    pub fn box_offsets(&self, l: usize) -> Vec<Vec<i64>> {
        let side = 2 * l + 1;
        let count = side.pow(self.d as u32);
        (0..count)
            .map(|mut k| {
                (0..self.d)
                    .map(|_| {
                        let c = (k % side) as i64 - l as i64;
                        k /= side;
                        c
                    })
                    .collect()
            })
            .collect()
    }
}

/// Periodic distance between two points of the unit torus.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut dx = (x - y).rem_euclid(1.0);
            if dx > 0.5 {
                dx = 1.0 - dx;
            }
            dx * dx
        })
        .sum::<f64>()
        .sqrt()
}
