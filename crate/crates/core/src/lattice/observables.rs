//! Coarse-grained observables of a particle configuration.

use super::config::ParticleConfig;
use super::shape::{torus_distance, LatticeShape};
use crate::ensemble::{fugacity_phi_law, RateFunction};
use crate::environment::{EnvironmentField, EnvironmentModel, RateLaw};
use crate::error::Result;

/// Block average `η^l(x) = (2l+1)^{-d} Σ_{|y-x|_∞ ≤ l} η(y)`.
pub fn block_average(cfg: &ParticleConfig, x: usize, l: usize) -> f64 {
    let shape = cfg.shape();
    let offsets = shape.box_offsets(l);
    let sum: u64 = offsets.iter().map(|o| cfg.get(shape.offset(x, o)) as u64).sum();
    sum as f64 / offsets.len() as f64
}

/// Periodic sup-norm box means of `values` for every site, by separable
/// sliding sums along each axis.
pub fn box_mean_field(shape: LatticeShape, values: &[f64], l: usize) -> Vec<f64> {
    let n = shape.n;
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..shape.d {
        let stride = shape.stride(axis);
        let lines = shape.volume() / n;
        for line in 0..lines {
            // base index of the line: all coordinates except `axis`
            let low = line % stride;
            let high = line / stride;
            let base = low + high * stride * n;
            for i in 0..n {
                let mut s = 0.0;
                for k in 0..=2 * l {
                    let j = (i + n * (l / n + 1) + k - l) % n;
                    s += cur[base + j * stride];
                }
                next[base + i * stride] = s;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let norm = ((2 * l + 1) as f64).powi(shape.d as i32);
    cur.iter_mut().for_each(|v| *v /= norm);
    cur
}

/// `η^l(x)` at every site.
pub fn block_average_field(cfg: &ParticleConfig, l: usize) -> Vec<f64> {
    let vals: Vec<f64> = cfg.occupations().iter().map(|&n| n as f64).collect();
    box_mean_field(cfg.shape(), &vals, l)
}

/// Volume of the Euclidean ball of radius `r` in dimension `d`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => std::f64::consts::PI * r * r,
        3 => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
        _ => unreachable!("dimension checked by LatticeShape"),
    }
}

/// Sites `x` with `dist(x/N, center) ≤ radius`.
pub fn ball_stencil(shape: LatticeShape, center: &[f64], radius: f64) -> Vec<usize> {
    let n = shape.n as f64;
    let reach = (radius * n).ceil() as i64 + 1;
    let base: Vec<i64> = center.iter().map(|c| (c * n).floor() as i64).collect();
    let side = (2 * reach + 1) as usize;
    let mut sites = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for k in 0..side.pow(shape.d as u32) {
        let mut rest = k;
        let coords: Vec<usize> = base
            .iter()
            .map(|b| {
                let c = b + (rest % side) as i64 - reach;
                rest /= side;
                c.rem_euclid(shape.n as i64) as usize
            })
            .collect();
        let site = shape.index(&coords);
        if torus_distance(&shape.position(site), center) <= radius && seen.insert(site) {
            sites.push(site);
        }
    }
    sites.sort_unstable();
    sites
}

/// Particle mass in the ball divided by `|B|·N^d`.
pub fn ball_density(cfg: &ParticleConfig, center: &[f64], radius: f64) -> f64 {
    let shape = cfg.shape();
    let count: u64 = ball_stencil(shape, center, radius).iter().map(|&x| cfg.get(x) as u64).sum();
    count as f64 / (ball_volume(shape.d, radius) * shape.volume() as f64)
}

/// Precomputed ball stencils for a fixed set of centres.
#[derive(Debug, Clone)]
pub struct BallCover {
    shape: LatticeShape,
    radius: f64,
    stencils: Vec<Vec<u32>>,
}

impl BallCover {
    pub fn new(shape: LatticeShape, centers: &[Vec<f64>], radius: f64) -> Self {
        let stencils = centers
            .iter()
            .map(|c| ball_stencil(shape, c, radius).into_iter().map(|x| x as u32).collect())
            .collect();
        Self { shape, radius, stencils }
    }

    /// Balls centred on the cell centres of an `m`-grid.
    pub fn on_grid(shape: LatticeShape, grid: LatticeShape, radius: f64) -> Self {
        let centers: Vec<Vec<f64>> = (0..grid.volume()).map(|j| grid.cell_center(j)).collect();
        Self::new(shape, &centers, radius)
    }

    pub fn densities(&self, cfg: &ParticleConfig) -> Vec<f64> {
        let eta = cfg.occupations();
        let norm = ball_volume(self.shape.d, self.radius) * self.shape.volume() as f64;
        self.stencils
            .iter()
            .map(|s| s.iter().map(|&x| eta[x as usize] as u64).sum::<u64>() as f64 / norm)
            .collect()
    }

    pub fn stencil_sizes(&self) -> Vec<usize> {
        self.stencils.iter().map(Vec::len).collect()
    }

    /// Mean ratio of lattice stencil size to the continuum volume `|B| N^d`.
    pub fn volume_ratio(&self) -> f64 {
        let cont = ball_volume(self.shape.d, self.radius) * self.shape.volume() as f64;
        self.stencils.iter().map(|s| s.len() as f64 / cont).sum::<f64>() / self.stencils.len().max(1) as f64
    }
}

/// `N^{-d} Σ_x G(x/N) η(x)`.
pub fn pair_with_test_function(cfg: &ParticleConfig, test: impl Fn(&[f64]) -> f64) -> f64 {
    let shape = cfg.shape();
    let s: f64 = (0..shape.volume())
        .filter(|&x| cfg.get(x) > 0)
        .map(|x| test(&shape.position(x)) * cfg.get(x) as f64)
        .sum();
    s / shape.volume() as f64
}

/// Per-site access to `Φ(x/N, ·)`.
///
/// For `g(n) = s·n` the map is linear, `Φ = s·f̃(x/N)·ρ`, and only the
/// coefficient is stored. Otherwise the site law is kept and `Φ` is obtained
/// by root finding.
#[derive(Debug, Clone)]
pub struct LocalEquilibrium {
    g: RateFunction,
    shape: LatticeShape,
    repr: EquilibriumRepr,
}

#[derive(Debug, Clone)]
enum EquilibriumRepr {
    Linear(Vec<f64>),
    General(Vec<RateLaw>),
}

impl LocalEquilibrium {
    pub fn new(g: &RateFunction, model: &EnvironmentModel, shape: LatticeShape) -> Self {
        let laws: Vec<RateLaw> = (0..shape.volume()).map(|x| model.site_law(&shape.position(x))).collect();
        let repr = match g.linear_slope() {
            Some(slope) => EquilibriumRepr::Linear(laws.iter().map(|l| slope * l.harmonic_mean()).collect()),
            None => EquilibriumRepr::General(laws),
        };
        Self { g: g.clone(), shape, repr }
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    /// `Φ(x/N, ρ)`.
    pub fn phi(&self, site: usize, rho: f64) -> Result<f64> {
        match &self.repr {
            EquilibriumRepr::Linear(coef) => Ok(coef[site] * rho),
            EquilibriumRepr::General(laws) => {
                let u = self.shape.position(site);
                Ok(fugacity_phi_law(&self.g, &laws[site], &u, rho, None)?.value())
            }
        }
    }
}

/// `V_{x,l} = |(2l+1)^{-d} Σ_{|y-x|≤l} p(y) g(η(y)) − Φ(x/N, η^l(x))|`.
pub fn replacement_observable(
    cfg: &ParticleConfig,
    env: &EnvironmentField,
    g: &RateFunction,
    x: usize,
    l: usize,
    eq: &LocalEquilibrium,
) -> Result<f64> {
    let shape = cfg.shape();
    let offsets = shape.box_offsets(l);
    let mut flux = 0.0;
    let mut mass = 0u64;
    for o in &offsets {
        let y = shape.offset(x, o);
        flux += env.rates()[y] * g.eval(cfg.get(y));
        mass += cfg.get(y) as u64;
    }
    let k = offsets.len() as f64;
    Ok((flux / k - eq.phi(x, mass as f64 / k)?).abs())
}

/// Spatial mean of `V_{x,l}` over all sites.
pub fn replacement_mean(
    cfg: &ParticleConfig,
    env: &EnvironmentField,
    g: &RateFunction,
    l: usize,
    eq: &LocalEquilibrium,
) -> Result<f64> {
    let shape = cfg.shape();
    let flux: Vec<f64> = cfg
        .occupations()
        .iter()
        .zip(env.rates())
        .map(|(&n, &p)| p * g.eval(n))
        .collect();
    let flux_avg = box_mean_field(shape, &flux, l);
    let dens_avg = block_average_field(cfg, l);
    let mut acc = 0.0;
    for x in 0..shape.volume() {
        acc += (flux_avg[x] - eq.phi(x, dens_avg[x])?).abs();
    }
    Ok(acc / shape.volume() as f64)
}

/// Mean over `x` and `|y|_∞ ≤ εN` of `|η^l(x+y) − η^{εN}(x)|`.
pub fn two_blocks(cfg: &ParticleConfig, l: usize, eps: f64) -> f64 {
    let shape = cfg.shape();
    let big = ((eps * shape.n as f64).floor() as usize).min((shape.n - 1) / 2);
    let small = block_average_field(cfg, l);
    let large = block_average_field(cfg, big);
    let offsets = shape.box_offsets(big);
    let mut acc = 0.0;
    for x in 0..shape.volume() {
        for o in &offsets {
            acc += (small[shape.offset(x, o)] - large[x]).abs();
        }
    }
    acc / (shape.volume() * offsets.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(eta: Vec<u32>) -> ParticleConfig {
        let n = eta.len();
        ParticleConfig::from_occupations(LatticeShape::new(1, n).unwrap(), eta).unwrap()
    }

    #[test]
    fn block_average_examples() {
        let c = line(vec![0, 1, 2, 3, 4]);
        assert!((block_average(&c, 0, 1) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(block_average(&c, 3, 0), 3.0);
        let u = ParticleConfig::uniform(LatticeShape::new(2, 9).unwrap(), 7);
        for l in 0..4 {
            assert_eq!(block_average(&u, 40, l), 7.0);
        }
    }

    #[test]
    fn block_field_matches_pointwise() {
        let shape = LatticeShape::new(2, 7).unwrap();
        let eta: Vec<u32> = (0..49).map(|i| (i * 13 % 11) as u32).collect();
        let c = ParticleConfig::from_occupations(shape, eta).unwrap();
        for l in 0..4 {
            let f = block_average_field(&c, l);
            for x in 0..49 {
                assert!((f[x] - block_average(&c, x, l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_density_examples() {
        let shape = LatticeShape::new(2, 100).unwrap();
        let r = 0.05;
        let empty = ParticleConfig::empty(shape);
        assert_eq!(ball_density(&empty, &[0.5, 0.5], r), 0.0);
        let mut one = ParticleConfig::empty(shape);
        one.add(shape.index(&[50, 50]), 1);
        let want = 1.0 / (std::f64::consts::PI * r * r * 1e4);
        assert!((ball_density(&one, &[0.5, 0.5], r) - want).abs() < 1e-15);
        let four = ParticleConfig::uniform(shape, 4);
        let d = ball_density(&four, &[0.5, 0.5], r);
        // discretization error O(1/(rN))
        assert!((d - 4.0).abs() < 4.0 / (r * 100.0), "{d}");
    }

    #[test]
    fn ball_cover_matches_direct() {
        let shape = LatticeShape::new(2, 30).unwrap();
        let eta: Vec<u32> = (0..900).map(|i| (i * 7 % 5) as u32).collect();
        let c = ParticleConfig::from_occupations(shape, eta).unwrap();
        let grid = LatticeShape::new(2, 8).unwrap();
        let cover = BallCover::on_grid(shape, grid, 0.11);
        let dens = cover.densities(&c);
        for j in 0..grid.volume() {
            assert!((dens[j] - ball_density(&c, &grid.cell_center(j), 0.11)).abs() < 1e-14);
        }
    }

    #[test]
    fn pairing_examples() {
        let shape = LatticeShape::new(2, 16).unwrap();
        let c = ParticleConfig::uniform(shape, 3);
        assert!((pair_with_test_function(&c, |_| 1.0) - 3.0).abs() < 1e-15);
        let mut one = ParticleConfig::empty(shape);
        one.add(shape.index(&[2, 3]), 1);
        let inside = |u: &[f64]| if u[0] < 0.25 && u[1] < 0.25 { 1.0 } else { 0.0 };
        assert_eq!(pair_with_test_function(&one, inside), 1.0 / 256.0);
    }

    #[test]
    fn pairing_riemann_sum() {
        let g = |u: &[f64]| (2.0 * std::f64::consts::PI * u[0]).sin().powi(2) + u[1];
        // ∫ sin²(2πu₁) + u₂ = 1/2 + 1/2
        let mut prev = f64::INFINITY;
        for n in [8, 32, 128] {
            let c = ParticleConfig::uniform(LatticeShape::new(2, n).unwrap(), 2);
            let err = (pair_with_test_function(&c, g) - 2.0).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 2.0 / 128.0 + 1e-12);
    }

    #[test]
    fn two_blocks_vanishes_on_constant() {
        let c = ParticleConfig::uniform(LatticeShape::new(2, 20).unwrap(), 5);
        assert!(two_blocks(&c, 1, 0.2) < 1e-14);
    }
}
