//! Explicit conservative finite differences for `∂ₜρ = Δ Φ(u, ρ)` on the torus.

use serde::{Deserialize, Serialize};

use crate::ensemble::{effective_diffusivity, fugacity_phi_law, RateFunction};
use crate::environment::{EnvironmentModel, RateLaw};
use crate::error::{Error, Result};
use crate::lattice::{DensityField, LatticeShape};

/// Fraction of the stability limit `h²/(2dΛ)` used for the default step.
pub const CFL_SAFETY: f64 = 0.9;

/// `κ(u_j) = f̃` at every cell centre of an `M`-grid.
pub fn diffusivity_grid(model: &EnvironmentModel, d: usize, m: usize) -> Result<DensityField> {
    if m < 8 {
        return Err(Error::Validation(format!("PDE grid needs M >= 8, got {m}")));
    }
    let grid = LatticeShape::new(d, m)?;
    Ok(DensityField::from_fn(grid, |u| effective_diffusivity(model, u)))
}

/// `C/κ` with `C` chosen so that the discrete mass equals `mass`.
pub fn stationary_profile(kappa: &DensityField, mass: f64) -> DensityField {
    let inv: Vec<f64> = kappa.values.iter().map(|k| 1.0 / k).collect();
    let c = mass / (kappa.cell_volume() * inv.iter().sum::<f64>());
    DensityField { shape: kappa.shape, values: inv.into_iter().map(|v| c * v).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

/// Discrete norm of `a − b` with `h^d` weights. When the grids differ and
/// `resample` is set, `b` is read at the cell of each centre of `a`.
pub fn field_error(a: &DensityField, b: &DensityField, norm: Norm, resample: bool) -> Result<f64> {
    let diff: Vec<f64> = if a.shape == b.shape {
        a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect()
    } else if resample && a.shape.d == b.shape.d {
        (0..a.shape.volume()).map(|j| a.values[j] - b.nearest(&a.shape.cell_center(j))).collect()
    } else {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.shape, b.shape)));
    };
    let w = a.cell_volume();
    Ok(match norm {
        Norm::L1 => w * diff.iter().map(|v| v.abs()).sum::<f64>(),
        Norm::L2 => (w * diff.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        Norm::Linf => diff.iter().map(|v| v.abs()).fold(0.0, f64::max),
    })
}

/// L1 error divided by the L1 mass of the reference `b`.
pub fn relative_l1(a: &DensityField, b: &DensityField) -> Result<f64> {
    let mass: f64 = b.cell_volume() * b.values.iter().map(|v| v.abs()).sum::<f64>();
    Ok(field_error(a, b, Norm::L1, true)? / mass)
}

/// The nonlinearity of the equation.
#[derive(Debug, Clone)]
pub enum Coefficient {
    /// `Φ(u, ρ) = κ(u)·ρ`.
    Linear(Vec<f64>),
    /// `Φ(u, ρ)` by root finding on the local site law, warm-started from the
    /// previous step.
    General { g: RateFunction, laws: Vec<RateLaw>, centers: Vec<Vec<f64>>, last: Vec<f64>, lipschitz: f64 },
}

impl Coefficient {
    /// Upper bound on `∂Φ/∂ρ` used by the step-size rule.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Coefficient::Linear(k) => k.iter().copied().fold(0.0, f64::max),
            Coefficient::General { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Grid, coefficient, current density and clock of one PDE run.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    grid: LatticeShape,
    coefficient: Coefficient,
    rho: DensityField,
    w: Vec<f64>,
    neighbors: Vec<u32>,
    t: f64,
    dt: f64,
}

impl PdeProblem {
    /// Linear problem `∂ₜρ = Δ(κρ)` with the default step.
    pub fn linear(kappa: &DensityField, rho: DensityField) -> Result<Self> {
        if kappa.values.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Validation("diffusivity must be positive".into()));
        }
        Self::with_coefficient(Coefficient::Linear(kappa.values.clone()), kappa.shape, rho)
    }

    /// `∂ₜρ = Δ Φ(u, ρ)` for a general rate function in the annealed environment.
    ///
    /// The step size uses `Λ = b·g*`, with `b` the upper rate bound and `g*` the
    /// Lipschitz constant of `g`.
    pub fn general(g: &RateFunction, model: &EnvironmentModel, rho: DensityField) -> Result<Self> {
        let grid = rho.shape;
        let centers: Vec<Vec<f64>> = (0..grid.volume()).map(|j| grid.cell_center(j)).collect();
        let laws = centers.iter().map(|u| model.site_law(u)).collect();
        let (_, b) = model.bounds();
        let coefficient = Coefficient::General {
            g: g.clone(),
            laws,
            centers,
            last: vec![f64::NAN; grid.volume()],
            lipschitz: b * g.lipschitz_bound(),
        };
        Self::with_coefficient(coefficient, grid, rho)
    }

    fn with_coefficient(coefficient: Coefficient, grid: LatticeShape, rho: DensityField) -> Result<Self> {
        if rho.shape != grid {
            return Err(Error::GridMismatch(format!("density on {:?}, coefficient on {:?}", rho.shape, grid)));
        }
        if let Some((cell, &value)) = rho.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeDensity { cell, value });
        }
        let dirs = grid.directions();
        let mut neighbors = Vec::with_capacity(grid.volume() * dirs);
        for j in 0..grid.volume() {
            for dir in 0..dirs {
                neighbors.push(grid.neighbor(j, dir) as u32);
            }
        }
        let mut p = Self { grid, coefficient, rho, w: vec![0.0; grid.volume()], neighbors, t: 0.0, dt: 0.0 };
        p.dt = p.stable_dt();
        Ok(p)
    }

    /// `safety · h²/(2dΛ)`.
    pub fn stable_dt(&self) -> f64 {
        let h = 1.0 / self.grid.n as f64;
        CFL_SAFETY * h * h / (2.0 * self.grid.d as f64 * self.coefficient.lipschitz())
    }

    fn dt_bound(&self) -> f64 {
        self.stable_dt() / CFL_SAFETY
    }

    /// Overrides the time step; rejected above the stability limit.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.dt_bound() * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound: self.dt_bound() });
        }
        self.dt = dt;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub fn density(&self) -> &DensityField {
        &self.rho
    }

    pub fn grid(&self) -> LatticeShape {
        self.grid
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coefficient
    }

    fn evaluate_w(&mut self) -> Result<()> {
        match &mut self.coefficient {
            Coefficient::Linear(k) => {
                for ((w, k), r) in self.w.iter_mut().zip(k.iter()).zip(&self.rho.values) {
                    *w = k * r;
                }
            }
            Coefficient::General { g, laws, centers, last, .. } => {
                for j in 0..self.w.len() {
                    let guess = last[j].is_finite().then_some(last[j]);
                    let phi = fugacity_phi_law(g, &laws[j], &centers[j], self.rho.values[j], guess)?.value();
                    last[j] = phi;
                    self.w[j] = phi;
                }
            }
        }
        Ok(())
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        if dt > self.dt_bound() * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound: self.dt_bound() });
        }
        self.evaluate_w()?;
        let h = 1.0 / self.grid.n as f64;
        let lambda = dt / (h * h);
        let dirs = self.grid.directions();
        for j in 0..self.w.len() {
            let wj = self.w[j];
            let mut lap = 0.0;
            for &k in &self.neighbors[j * dirs..(j + 1) * dirs] {
                lap += self.w[k as usize] - wj;
            }
            let next = self.rho.values[j] + lambda * lap;
            if next < 0.0 {
                return Err(Error::NegativeDensity { cell: j, value: next });
            }
            self.rho.values[j] = next;
        }
        self.t += dt;
        Ok(())
    }

    /// One step of size `dt`.
    pub fn pde_step(&mut self) -> Result<()> {
        self.advance(self.dt)
    }

    /// Steps to `t_end`, shortening the last step before every observer time
    /// and before `t_end` so they are hit exactly.
    pub fn pde_run(&mut self, t_end: f64, observer_times: &[f64], mut observe: impl FnMut(f64, &DensityField)) -> Result<()> {
        if t_end < self.t {
            return Err(Error::Validation(format!("cannot run back from {} to {t_end}", self.t)));
        }
        let mut stops: Vec<f64> = observer_times.iter().copied().filter(|&s| s >= self.t && s <= t_end).collect();
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let observed = stops.len();
        if stops.last() != Some(&t_end) {
            stops.push(t_end);
        }
        for (i, stop) in stops.into_iter().enumerate() {
            // count full steps up front so the clock does not accumulate drift
            let start = self.t;
            let span = stop - start;
            let full = (span / self.dt * (1.0 - 1e-12)).floor() as u64;
            for _ in 0..full {
                self.advance(self.dt)?;
            }
            let rest = stop - (start + full as f64 * self.dt);
            if rest > 0.0 {
                self.advance(rest)?;
            }
            self.t = stop;
            if i < observed {
                observe(stop, &self.rho);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Profile;

    fn grid(d: usize, m: usize) -> LatticeShape {
        LatticeShape::new(d, m).unwrap()
    }

    #[test]
    fn diffusivity_examples() {
        let flat = EnvironmentModel::PoissonMolecules { theta: Profile::Constant { value: 0.0 }, nu: 0.5, chi0: 2.0 };
        let k = diffusivity_grid(&flat, 2, 8).unwrap();
        assert!(k.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        let constant_f = EnvironmentModel::PoissonMolecules { theta: Profile::default_bump(2), nu: 1.3, chi0: 0.0 };
        let k = diffusivity_grid(&constant_f, 2, 8).unwrap();
        assert!(k.values.iter().all(|v| (v - 1.3).abs() < 1e-14));
        let model = EnvironmentModel::default_chemotaxis(2);
        let k = diffusivity_grid(&model, 2, 16).unwrap();
        // the cell centre nearest (½, ½) is (0.53125, 0.53125)
        let want = crate::ensemble::harmonic_mean_ftilde(&model, model.mean_profile().eval(&[0.53125, 0.53125])).unwrap();
        assert!((k.nearest(&[0.53, 0.53]) - want).abs() < 1e-15);
        assert!(k.values.iter().all(|v| (0.5..=2.5).contains(v)));
        assert!(diffusivity_grid(&model, 2, 4).is_err());
    }

    #[test]
    fn constant_density_is_stationary() {
        let g = grid(2, 16);
        let kappa = DensityField::constant(g, 1.7);
        let mut p = PdeProblem::linear(&kappa, DensityField::constant(g, 3.0)).unwrap();
        for _ in 0..10 {
            p.pde_step().unwrap();
        }
        assert!(p.density().values.iter().all(|v| *v == 3.0));
    }

    #[test]
    fn inverse_diffusivity_is_a_fixed_point() {
        let model = EnvironmentModel::default_chemotaxis(2);
        let kappa = diffusivity_grid(&model, 2, 32).unwrap();
        let rho = stationary_profile(&kappa, 4.0);
        let mut p = PdeProblem::linear(&kappa, rho.clone()).unwrap();
        for _ in 0..5 {
            let before = p.density().clone();
            p.pde_step().unwrap();
            let err = field_error(p.density(), &before, Norm::Linf, false).unwrap();
            assert!(err <= 1e-12 * before.max(), "{err}");
        }
    }

    #[test]
    fn fourier_mode_decays_with_discrete_symbol() {
        let m = 32;
        let g = grid(2, m);
        let kappa_value = 0.8;
        let eps = 0.1;
        let rho = DensityField::from_fn(g, |u| 1.0 + eps * (2.0 * std::f64::consts::PI * u[0]).cos());
        let mut p = PdeProblem::linear(&DensityField::constant(g, kappa_value), rho.clone()).unwrap();
        p.pde_step().unwrap();
        let h = 1.0 / m as f64;
        let factor = 1.0 - p.dt() / (h * h) * kappa_value * 2.0 * (1.0 - (2.0 * std::f64::consts::PI * h).cos());
        for j in 0..g.volume() {
            let want = 1.0 + (rho.values[j] - 1.0) * factor;
            assert!((p.density().values[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_and_negativity_are_reported() {
        let g = grid(1, 16);
        let kappa = DensityField::constant(g, 1.0);
        let mut p = PdeProblem::linear(&kappa, DensityField::constant(g, 1.0)).unwrap();
        let h2 = 1.0 / 256.0;
        assert!(matches!(p.set_dt(h2), Err(Error::CflViolation { .. })));
        p.set_dt(0.5 * h2).unwrap();
        let mut spike = vec![0.0; 16];
        spike[3] = 1.0;
        assert!(PdeProblem::linear(&kappa, DensityField::new(g, vec![-1.0; 16]).unwrap()).is_err());
        let mut q = PdeProblem::linear(&kappa, DensityField::new(g, spike).unwrap()).unwrap();
        q.pde_step().unwrap();
        assert!(q.density().min() >= 0.0);
    }

    #[test]
    fn run_lands_on_observer_times() {
        let g = grid(1, 16);
        let kappa = DensityField::from_fn(g, |u| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * u[0]).sin());
        let rho = DensityField::from_fn(g, |u| 2.0 + u[0]);
        let mut p = PdeProblem::linear(&kappa, rho.clone()).unwrap();
        p.pde_run(0.0, &[], |_, _| {}).unwrap();
        assert_eq!(p.density(), &rho);
        let mut seen = Vec::new();
        p.pde_run(0.0123, &[0.001, 0.005], |t, f| seen.push((t, f.mass()))).unwrap();
        assert_eq!(p.time(), 0.0123);
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0.001, 0.005]);
        for (_, m) in seen {
            assert!((m - rho.mass()).abs() <= 1e-12 * rho.mass());
        }
    }

    #[test]
    fn long_run_reaches_stationary_profile() {
        let model = EnvironmentModel::default_chemotaxis(1);
        let kappa = diffusivity_grid(&model, 1, 32).unwrap();
        let rho = DensityField::from_fn(kappa.shape, |u| 3.0 + (2.0 * std::f64::consts::PI * u[0]).cos());
        let mass = rho.mass();
        let mut p = PdeProblem::linear(&kappa, rho).unwrap();
        // slowest decay rate is at least 4π² min κ ≈ 20, so t = 2 is ample
        p.pde_run(2.0, &[], |_, _| {}).unwrap();
        let target = stationary_profile(&kappa, mass);
        assert!(field_error(p.density(), &target, Norm::L1, false).unwrap() < 1e-8);
    }

    #[test]
    fn stationary_profile_examples() {
        let g = grid(1, 8);
        let s = stationary_profile(&DensityField::constant(g, 0.7), 4.0);
        assert!(s.values.iter().all(|v| (v - 4.0).abs() < 1e-14));
        // two cells in the toy: κ = (1, 2), mean density 3
        let kappa = DensityField { shape: grid(1, 2), values: vec![1.0, 2.0] };
        let s = stationary_profile(&kappa, 3.0);
        assert!((s.values[0] - 4.0).abs() < 1e-14 && (s.values[1] - 2.0).abs() < 1e-14);
        let model = EnvironmentModel::default_chemotaxis(2);
        let kappa = diffusivity_grid(&model, 2, 32).unwrap();
        let s = stationary_profile(&kappa, 4.0);
        let argmin = (0..kappa.values.len()).min_by(|&a, &b| kappa.values[a].total_cmp(&kappa.values[b])).unwrap();
        assert_eq!(s.values[argmin], s.max());
        let c = s.shape.cell_center(argmin);
        assert!((c[0] - 0.5).abs() < 0.04 && (c[1] - 0.5).abs() < 0.04);
    }

    #[test]
    fn field_error_examples() {
        let g = grid(2, 10);
        let one = DensityField::constant(g, 1.0);
        let zero = DensityField::constant(g, 0.0);
        assert_eq!(field_error(&one, &one, Norm::L2, false).unwrap(), 0.0);
        assert!((field_error(&one, &zero, Norm::L1, false).unwrap() - 1.0).abs() < 1e-14);
        let half = DensityField::from_fn(g, |u| if u[0] < 0.5 { 1.0 } else { 0.0 });
        assert!((field_error(&half, &zero, Norm::L1, false).unwrap() - 0.5).abs() < 1e-14);
        let coarse = DensityField::constant(grid(2, 5), 0.0);
        assert!(matches!(field_error(&one, &coarse, Norm::L1, false), Err(Error::GridMismatch(_))));
        assert!((field_error(&one, &coarse, Norm::Linf, true).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn general_path_matches_linear_path() {
        let model = EnvironmentModel::default_chemotaxis(2);
        let kappa = diffusivity_grid(&model, 2, 16).unwrap();
        let rho = DensityField::from_fn(kappa.shape, |u| 4.0 + (2.0 * std::f64::consts::PI * u[1]).sin());
        let mut lin = PdeProblem::linear(&kappa, rho.clone()).unwrap();
        let mut gen = PdeProblem::general(&RateFunction::identity(), &model, rho).unwrap();
        gen.set_dt(lin.dt()).unwrap();
        for _ in 0..50 {
            lin.pde_step().unwrap();
            gen.pde_step().unwrap();
        }
        let err = field_error(lin.density(), gen.density(), Norm::Linf, false).unwrap();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn general_path_refuses_supercritical_density() {
        let model = EnvironmentModel::default_chemotaxis(2);
        let g = grid(2, 8);
        let mut p = PdeProblem::general(&RateFunction::constant(3.0), &model, DensityField::constant(g, 40.0)).unwrap();
        assert!(matches!(p.pde_step(), Err(Error::DensityUnreachable { .. })));
    }

    #[test]
    fn mass_is_conserved_over_many_steps() {
        let model = EnvironmentModel::default_chemotaxis(2);
        let kappa = diffusivity_grid(&model, 2, 32).unwrap();
        let rho = DensityField::from_fn(kappa.shape, |u| 4.0 + 3.0 * (-50.0 * ((u[0] - 0.3).powi(2) + (u[1] - 0.6).powi(2))).exp());
        let m0 = rho.mass();
        let mut p = PdeProblem::linear(&kappa, rho).unwrap();
        // with variable κ the maximum principle holds for w = κρ
        let w_range = |p: &PdeProblem| {
            let w: Vec<f64> = p.density().values.iter().zip(&kappa.values).map(|(r, k)| r * k).collect();
            (w.iter().copied().fold(f64::INFINITY, f64::min), w.iter().copied().fold(0.0, f64::max))
        };
        let (mut lo, mut hi) = w_range(&p);
        for _ in 0..10_000 {
            p.pde_step().unwrap();
            let (a, b) = w_range(&p);
            assert!(a >= lo - 1e-13 && b <= hi + 1e-13);
            lo = a;
            hi = b;
        }
        assert!((p.density().mass() - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn maximum_principle_for_constant_coefficient() {
        let g = grid(2, 24);
        let rho = DensityField::from_fn(g, |u| 1.0 + (-40.0 * ((u[0] - 0.5).powi(2) + (u[1] - 0.5).powi(2))).exp());
        let mut p = PdeProblem::linear(&DensityField::constant(g, 1.4), rho).unwrap();
        let (mut lo, mut hi) = (p.density().min(), p.density().max());
        for _ in 0..500 {
            p.pde_step().unwrap();
            let (a, b) = (p.density().min(), p.density().max());
            assert!(a >= lo - 1e-15 && b <= hi + 1e-15);
            lo = a;
            hi = b;
        }
    }
}
