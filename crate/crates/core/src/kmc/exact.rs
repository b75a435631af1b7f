//! Exact generator of the process on a tiny lattice with a fixed particle
//! number, used as an oracle for the simulator and the ensemble module.

use std::collections::HashMap;

use crate::ensemble::{compositions, RateFunction};
use crate::error::{Error, Result};
use crate::lattice::LatticeShape;

/// Dense generator on the fixed-`K` simplex, in microscopic units.
#[derive(Debug, Clone)]
pub struct ExactGenerator {
    pub configs: Vec<Vec<u32>>,
    /// `matrix[i][j]` is the rate from `configs[i]` to `configs[j]`; rows sum to 0.
    pub matrix: Vec<Vec<f64>>,
}

const MAX_STATES: usize = 20_000;

impl ExactGenerator {
    /// Every directed nearest-neighbour bond `(x, y)` fires at `g(η(x))·p(x)`.
    pub fn build(shape: LatticeShape, p: &[f64], g: &RateFunction, total: u32) -> Result<Self> {
        if p.len() != shape.volume() {
            return Err(Error::GridMismatch(format!("{} rates for {} sites", p.len(), shape.volume())));
        }
        let configs = compositions(shape.volume(), total);
        if configs.len() > MAX_STATES {
            return Err(Error::EnumerationTooLarge {
                sites: shape.volume(),
                particles: total,
                max_sites: shape.volume(),
                max_particles: 0,
            });
        }
        let index: HashMap<&[u32], usize> = configs.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
        let n = configs.len();
        let mut matrix = vec![vec![0.0; n]; n];
        let mut next = vec![0u32; shape.volume()];
        for (i, c) in configs.iter().enumerate() {
            for x in 0..shape.volume() {
                if c[x] == 0 {
                    continue;
                }
                let rate = g.eval(c[x]) * p[x];
                for dir in 0..shape.directions() {
                    let y = shape.neighbor(x, dir);
                    next.copy_from_slice(c);
                    next[x] -= 1;
                    next[y] += 1;
                    let j = index[next.as_slice()];
                    matrix[i][j] += rate;
                    matrix[i][i] -= rate;
                }
            }
        }
        Ok(Self { configs, matrix })
    }

    /// `max_j |(π Q)_j|` for a row vector `π`.
    pub fn left_residual(&self, pi: &[f64]) -> f64 {
        let n = self.configs.len();
        (0..n)
            .map(|j| (0..n).map(|i| pi[i] * self.matrix[i][j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|π_i Q_ij − π_j Q_ji|` over off-diagonal pairs.
    pub fn detailed_balance_defect(&self, pi: &[f64]) -> f64 {
        let n = self.configs.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max((pi[i] * self.matrix[i][j] - pi[j] * self.matrix[j][i]).abs());
                }
            }
        }
        worst
    }

    /// `exp(tQ)` by scaling and squaring of a Taylor series.
    pub fn transition_matrix(&self, t: f64) -> Vec<Vec<f64>> {
        let n = self.configs.len();
        let norm = self.matrix.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let h = t / 2f64.powi(squarings as i32);
        let a: Vec<Vec<f64>> = self.matrix.iter().map(|r| r.iter().map(|v| v * h).collect()).collect();
        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..30 {
            term = matmul(&term, &a);
            term.iter_mut().flatten().for_each(|v| *v /= k as f64);
            for (r, tr) in result.iter_mut().zip(&term) {
                for (v, tv) in r.iter_mut().zip(tr) {
                    *v += tv;
                }
            }
        }
        for _ in 0..squarings {
            result = matmul(&result, &result);
        }
        result
    }
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik != 0.0 {
                for j in 0..m {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}
