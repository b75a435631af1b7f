use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{EnvironmentPolicy, Experiment, ExperimentConfig};
use super::report::{
    CheckpointStats, ComparisonReport, CondensationReport, CondensationTrace, ReplacementStat, ReplicaFailure, Summary,
};
use crate::ensemble::{annealed_r, density_m, effective_diffusivity, fugacity_phi, partition_z, RateFunction, RateKind};
use crate::environment::EnvironmentField;
use crate::error::{Error, Result};
use crate::io::{field_csv, sha256_hex, GridFile, Manifest};
use crate::kmc::SimulatorState;
use crate::lattice::{
    replacement_mean, two_blocks, BallCover, DensityField, LatticeShape, LocalEquilibrium, ParticleConfig,
};
use crate::pde::{diffusivity_grid, field_error, Norm, PdeProblem};

/// Seed of the environment used by `replica`.
pub fn environment_seed(cfg: &ExperimentConfig, replica: usize) -> u64 {
    match cfg.environment_policy {
        EnvironmentPolicy::Shared => cfg.base_seed,
        EnvironmentPolicy::Resampled => {
            cfg.base_seed.wrapping_add((replica as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        }
    }
}

fn environments(cfg: &ExperimentConfig, shape: LatticeShape) -> Result<Vec<Arc<EnvironmentField>>> {
    let model = cfg.environment_model();
    match cfg.environment_policy {
        EnvironmentPolicy::Shared => {
            let env = Arc::new(EnvironmentField::sample(&model, shape, cfg.base_seed)?);
            Ok(vec![env; cfg.replicas])
        }
        EnvironmentPolicy::Resampled => (0..cfg.replicas)
            .map(|r| EnvironmentField::sample(&model, shape, environment_seed(cfg, r)).map(Arc::new))
            .collect(),
    }
}

/// `ρ₀` on the PDE grid.
pub fn initial_density(cfg: &ExperimentConfig, grid: LatticeShape) -> Result<DensityField> {
    let model = cfg.environment_model();
    let rho0 = cfg
        .initial
        .macroscopic_density(Some(&model))
        .ok_or_else(|| Error::Validation("the initial condition has no macroscopic density".into()))?;
    Ok(DensityField::from_fn(grid, |u| rho0(u)))
}

/// The limit equation for `cfg`, starting from `ρ₀`.
pub fn pde_problem(cfg: &ExperimentConfig) -> Result<PdeProblem> {
    let g = cfg.rate_function()?;
    let model = cfg.environment_model();
    let grid = LatticeShape::new(cfg.d, cfg.m)?;
    let rho = initial_density(cfg, grid)?;
    match g.linear_slope() {
        Some(slope) => {
            let mut kappa = diffusivity_grid(&model, cfg.d, cfg.m)?;
            kappa.values.iter_mut().for_each(|k| *k *= slope);
            PdeProblem::linear(&kappa, rho)
        }
        None => PdeProblem::general(&g, &model, rho),
    }
}

/// PDE densities at the checkpoints.
#[derive(Debug, Clone)]
pub struct PdeTrace {
    pub fields: Vec<DensityField>,
    pub initial_mass: f64,
    /// Largest `|mass − initial| / initial` over the checkpoints.
    pub mass_drift: f64,
}

pub fn run_pde(cfg: &ExperimentConfig) -> Result<PdeTrace> {
    let mut problem = pde_problem(cfg)?;
    let initial_mass = problem.density().mass();
    let mut fields = Vec::with_capacity(cfg.t_checkpoints.len());
    let t_end = cfg.t_checkpoints.last().copied().unwrap_or(0.0);
    problem.pde_run(t_end, &cfg.t_checkpoints, |_, f| fields.push(f.clone()))?;
    let mass_drift = fields
        .iter()
        .map(|f| (f.mass() - initial_mass).abs() / initial_mass.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(PdeTrace { fields, initial_mass, mass_drift })
}

fn diagnostic_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let t_end = cfg.t_checkpoints.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return Vec::new();
    }
    let k = cfg.diagnostic_samples;
    (1..=k).map(|i| t_end * i as f64 / k as f64).collect()
}

fn block_sizes(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut ls = vec![cfg.block_l];
    ls.extend(cfg.extra_block_l.iter().copied().filter(|l| *l != cfg.block_l));
    ls
}

fn contains(sorted: &[f64], t: f64) -> Option<usize> {
    sorted.binary_search_by(|c| c.total_cmp(&t)).ok()
}

/// What one particle trajectory contributes to a comparison.
struct ReplicaTrace {
    fields: Vec<Vec<f64>>,
    totals: Vec<u64>,
    /// `(time, spatial mean of V)` per block size.
    replacement: Vec<Vec<(f64, f64)>>,
    two_blocks: Option<f64>,
    initial_total: u64,
    events: u64,
}

struct CompareSetup<'a> {
    cfg: &'a ExperimentConfig,
    g: RateFunction,
    shape: LatticeShape,
    cover: BallCover,
    equilibrium: LocalEquilibrium,
    ls: Vec<usize>,
    diag: Vec<f64>,
}

fn simulator(cfg: &ExperimentConfig, g: &RateFunction, env: Arc<EnvironmentField>, replica: usize) -> Result<SimulatorState> {
    let shape = env.shape();
    let start = cfg.initial.build(shape, &env, cfg.base_seed, replica as u64)?;
    SimulatorState::with_sampler(start, env, g.clone(), cfg.base_seed, replica as u64, cfg.sampler)
}

fn run_replica(setup: &CompareSetup, env: Arc<EnvironmentField>, replica: usize) -> Result<ReplicaTrace> {
    let cfg = setup.cfg;
    let checkpoints = &cfg.t_checkpoints;
    let mut sim = simulator(cfg, &setup.g, env.clone(), replica)?;
    let initial_total = sim.config().total();
    let mut times: Vec<f64> = checkpoints.iter().chain(&setup.diag).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut trace = ReplicaTrace {
        fields: vec![Vec::new(); checkpoints.len()],
        totals: vec![0; checkpoints.len()],
        replacement: vec![Vec::new(); setup.ls.len()],
        two_blocks: None,
        initial_total,
        events: 0,
    };
    let mut failure = None;
    let t_end = times.last().copied().unwrap_or(0.0);
    sim.run_to_time(t_end, &times, |t, st| {
        if failure.is_some() {
            return;
        }
        if let Some(k) = contains(checkpoints, t) {
            trace.fields[k] = setup.cover.densities(st.config());
            trace.totals[k] = st.config().total();
            if k + 1 == checkpoints.len() && cfg.two_blocks_eps > 0.0 {
                trace.two_blocks = Some(two_blocks(st.config(), cfg.block_l, cfg.two_blocks_eps));
            }
        }
        if contains(&setup.diag, t).is_some() {
            for (i, &l) in setup.ls.iter().enumerate() {
                match replacement_mean(st.config(), &env, &setup.g, l, &setup.equilibrium) {
                    Ok(v) => trace.replacement[i].push((t, v)),
                    Err(e) => failure = Some(e),
                }
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    trace.events = sim.events();
    Ok(trace)
}

/// Runs `replicas` particle trajectories and the PDE, and compares them at
/// every checkpoint on the PDE cell centres.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let g = cfg.rate_function()?;
    let shape = LatticeShape::new(cfg.d, cfg.n)?;
    let grid = LatticeShape::new(cfg.d, cfg.m)?;
    let pde = run_pde(cfg)?;
    let envs = environments(cfg, shape)?;
    let setup = CompareSetup {
        cfg,
        g: g.clone(),
        shape,
        cover: BallCover::on_grid(shape, grid, cfg.ball_radius),
        equilibrium: LocalEquilibrium::new(&g, &cfg.environment_model(), shape),
        ls: block_sizes(cfg),
        diag: diagnostic_times(cfg),
    };
    let results: Vec<Result<ReplicaTrace>> =
        envs.par_iter().enumerate().map(|(r, env)| run_replica(&setup, env.clone(), r)).collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (replica, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => traces.push(t),
            Err(e) => {
                failures.push(ReplicaFailure { replica, message: e.to_string() });
                first_error.get_or_insert(e);
            }
        }
    }
    if traces.is_empty() {
        return Err(first_error.unwrap_or_else(|| Error::Validation("no replicas ran".into())));
    }
    aggregate(&setup, pde, traces, failures, &envs)
}

fn aggregate(
    setup: &CompareSetup,
    pde: PdeTrace,
    traces: Vec<ReplicaTrace>,
    failures: Vec<ReplicaFailure>,
    envs: &[Arc<EnvironmentField>],
) -> Result<ComparisonReport> {
    let cfg = setup.cfg;
    let volume = setup.shape.volume() as f64;
    let mut checkpoints = Vec::new();
    let mut empirical = Vec::new();
    for (k, &time) in cfg.t_checkpoints.iter().enumerate() {
        let reference = &pde.fields[k];
        let pde_mass = reference.mass();
        let mut l1 = Vec::new();
        let mut l2 = Vec::new();
        let mut linf = Vec::new();
        let mut mean = vec![0.0; reference.values.len()];
        for t in &traces {
            let f = DensityField::new(reference.shape, t.fields[k].clone())?;
            l1.push(field_error(&f, reference, Norm::L1, false)?);
            l2.push(field_error(&f, reference, Norm::L2, false)?);
            linf.push(field_error(&f, reference, Norm::Linf, false)?);
            mean.iter_mut().zip(&f.values).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= traces.len() as f64);
        let mean = DensityField::new(reference.shape, mean)?;
        let rel: Vec<f64> = l1.iter().map(|e| e / pde_mass).collect();
        let coarse: Vec<f64> = traces
            .iter()
            .map(|t| reference.cell_volume() * t.fields[k].iter().sum::<f64>())
            .collect();
        let particle: Vec<f64> = traces.iter().map(|t| t.totals[k] as f64 / volume).collect();
        let replacement = setup
            .ls
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| {
                let averages: Vec<f64> = traces
                    .iter()
                    .filter_map(|t| {
                        let upto: Vec<f64> = t.replacement[i].iter().filter(|(s, _)| *s <= time).map(|(_, v)| *v).collect();
                        (!upto.is_empty()).then(|| upto.iter().sum::<f64>() / upto.len() as f64)
                    })
                    .collect();
                (!averages.is_empty()).then(|| ReplacementStat { l, time_average: Summary::of(&averages) })
            })
            .collect();
        let two: Vec<f64> = traces.iter().filter_map(|t| t.two_blocks).collect();
        let is_last = k + 1 == cfg.t_checkpoints.len();
        checkpoints.push(CheckpointStats {
            time,
            l1: Summary::of(&l1),
            l2: Summary::of(&l2),
            linf: Summary::of(&linf),
            rel_l1: Summary::of(&rel),
            rel_l1_of_mean: field_error(&mean, reference, Norm::L1, false)? / pde_mass,
            particle_mass: Summary::of(&particle),
            coarse_mass: Summary::of(&coarse),
            pde_mass,
            replacement,
            two_blocks: (is_last && !two.is_empty()).then(|| Summary::of(&two)),
        });
        empirical.push(mean);
    }
    let mass_conserved = traces.iter().all(|t| t.totals.iter().all(|&n| n == t.initial_total));
    let mut environment_seeds: Vec<u64> = envs.iter().map(|e| e.seed()).collect();
    if cfg.environment_policy == EnvironmentPolicy::Shared {
        environment_seeds.truncate(1);
    }
    Ok(ComparisonReport {
        n: cfg.n,
        checkpoints,
        effective_replicas: traces.len(),
        failures,
        mass_conserved,
        pde_mass_drift: pde.mass_drift,
        config_hash: sha256_hex(cfg.to_toml().as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: cfg.base_seed,
        environment_seeds,
        events: traces.iter().map(|t| t.events).sum(),
        empirical,
        pde: pde.fields,
    })
}

/// Runs `run_compare` for every lattice side in `sweep_n`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>> {
    cfg.sweep_n
        .iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.n = n;
            run_compare(&c)
        })
        .collect()
}

/// Largest occupation over the particle total; 0 for an empty lattice.
pub fn max_site_fraction(cfg: &ParticleConfig) -> f64 {
    if cfg.total() == 0 {
        return 0.0;
    }
    cfg.get(cfg.argmax()) as f64 / cfg.total() as f64
}

/// Density above which a constant-rate process must condense in the
/// realized environment: `N^{-d} Σ r/(1−r)` over sites with `p > min p`,
/// where `r = min p / p`. Infinite when every rate is the minimum.
pub fn realized_critical_density(rates: &[f64]) -> f64 {
    let low = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if rates.iter().all(|&p| p <= low) {
        return f64::INFINITY;
    }
    let s: f64 = rates
        .iter()
        .filter(|&&p| p > low)
        .map(|&p| {
            let r = low / p;
            r / (1.0 - r)
        })
        .sum();
    s / rates.len() as f64
}

/// Constant-rate runs: tracks the largest site and where it sits.
pub fn run_condense(cfg: &ExperimentConfig) -> Result<CondensationReport> {
    cfg.validate()?;
    let g = cfg.rate_function()?;
    if !matches!(g.kind(), RateKind::ConstantRate(_)) {
        return Err(Error::Validation("condense needs a constant rate function".into()));
    }
    let shape = LatticeShape::new(cfg.d, cfg.n)?;
    let envs = environments(cfg, shape)?;
    let results: Vec<Result<CondensationTrace>> =
        envs.par_iter().enumerate().map(|(r, env)| condense_replica(cfg, &g, env.clone(), r)).collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (replica, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                let density = t.particles as f64 / shape.volume() as f64;
                if density <= t.critical_density {
                    warnings.push(format!(
                        "not condensing: replica {replica} has density {density} at or below the critical density {}",
                        t.critical_density
                    ));
                }
                traces.push(t);
            }
            Err(e) => failures.push(ReplicaFailure { replica, message: e.to_string() }),
        }
    }
    if traces.is_empty() {
        return Err(Error::Validation(format!("every replica failed: {:?}", failures.first().map(|f| &f.message))));
    }
    let successes = traces.iter().filter(|t| t.condensed && t.co_located).count();
    Ok(CondensationReport { traces, failures, successes, warnings, config_hash: sha256_hex(cfg.to_toml().as_bytes()) })
}

fn condense_replica(cfg: &ExperimentConfig, g: &RateFunction, env: Arc<EnvironmentField>, replica: usize) -> Result<CondensationTrace> {
    let mut sim = simulator(cfg, g, env.clone(), replica)?;
    let particles = sim.config().total();
    let mut samples = Vec::new();
    let t_end = cfg.t_checkpoints.last().copied().unwrap_or(0.0);
    sim.run_to_time(t_end, &cfg.t_checkpoints, |t, st| {
        samples.push((t, max_site_fraction(st.config()), st.config().argmax()));
    })?;
    let rates = env.rates();
    let (fraction, site) = samples.last().map(|&(_, f, x)| (f, x)).unwrap_or((0.0, sim.config().argmax()));
    let rate_rank = rates.iter().filter(|&&p| p < rates[site]).count() as f64 / rates.len() as f64;
    let zeta_argmax = (!env.zeta().is_empty())
        .then(|| (0..rates.len()).max_by_key(|&x| (env.zeta()[x], std::cmp::Reverse(x))).unwrap_or(0));
    Ok(CondensationTrace {
        replica,
        environment_seed: env.seed(),
        particles,
        samples,
        rate_rank,
        zeta_argmax,
        critical_density: realized_critical_density(rates),
        condensed: fraction > cfg.condense_fraction,
        co_located: rate_rank < cfg.condense_bottom,
    })
}

fn cell(r: Result<f64>) -> String {
    r.map(|v| v.to_string()).unwrap_or_default()
}

/// `Z`, `M`, `R(u, φ)`, `Φ(u, R(u, φ))` and `f̃` on the configured grids.
/// Cells that are undefined (divergent series, unreachable density) are empty.
pub fn run_ensemble_table(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let g = cfg.rate_function()?;
    let model = cfg.environment_model();
    let mut s: String = (1..=cfg.d).map(|i| format!("u{i},")).collect();
    s.push_str("phi,z,m,r,phi_of_r,ftilde\n");
    for u in &cfg.table_u {
        let ftilde = effective_diffusivity(&model, u);
        for &phi in &cfg.table_phi {
            let r = annealed_r(&g, &model, u, phi);
            let back = r.as_ref().map_err(|_| Error::Validation(String::new())).and_then(|&rho| {
                fugacity_phi(&g, &model, u, rho).map(|f| f.value())
            });
            for c in u {
                write!(s, "{c},").unwrap();
            }
            writeln!(
                s,
                "{phi},{},{},{},{},{ftilde}",
                cell(partition_z(&g, phi)),
                cell(density_m(&g, phi)),
                cell(r),
                cell(back)
            )
            .unwrap();
        }
    }
    Ok(s)
}

/// Particle runs without a reference: per-replica statistics and snapshots.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// `replica,time,total,max_occupancy,events` rows.
    pub table: String,
    /// `snapshots[replica][checkpoint]`.
    pub snapshots: Vec<Vec<ParticleConfig>>,
    pub environment_seeds: Vec<u64>,
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let g = cfg.rate_function()?;
    let shape = LatticeShape::new(cfg.d, cfg.n)?;
    let envs = environments(cfg, shape)?;
    let t_end = cfg.t_checkpoints.last().copied().unwrap_or(0.0);
    let runs: Vec<Result<(Vec<ParticleConfig>, Vec<u64>)>> = envs
        .par_iter()
        .enumerate()
        .map(|(r, env)| {
            let mut sim = simulator(cfg, &g, env.clone(), r)?;
            let mut snaps = Vec::new();
            let mut events = Vec::new();
            sim.run_to_time(t_end, &cfg.t_checkpoints, |_, st| {
                snaps.push(st.config().clone());
                events.push(st.events());
            })?;
            Ok((snaps, events))
        })
        .collect();
    let mut table = String::from("replica,time,total,max_occupancy,events\n");
    let mut snapshots = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        let (snaps, events) = run?;
        for ((t, c), e) in cfg.t_checkpoints.iter().zip(&snaps).zip(&events) {
            writeln!(table, "{r},{t},{},{},{e}", c.total(), c.get(c.argmax())).unwrap();
        }
        snapshots.push(snaps);
    }
    Ok(SimulationOutput { table, snapshots, environment_seeds: envs.iter().map(|e| e.seed()).collect() })
}

/// Collects output files under one directory and records them for the manifest.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn grid(&mut self, name: &str, grid: &GridFile) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        grid.save(&path)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn manifest(mut self, cfg: &ExperimentConfig, seeds: Vec<u64>, details: serde_json::Value) -> Result<Vec<String>> {
        self.text("config.toml", &cfg.to_toml())?;
        let mut m = Manifest::new(cfg.experiment.name(), &cfg.to_toml(), cfg.base_seed);
        m.seeds = seeds;
        m.files = self.files.clone();
        m.details = details;
        m.write(&self.dir.join("manifest.json"))?;
        self.files.push("manifest.json".into());
        Ok(self.files)
    }
}

fn write_comparison(report: &ComparisonReport, out: &mut Output, prefix: &str) -> Result<()> {
    out.text(&format!("{prefix}checkpoints.csv"), &report.checkpoints_csv())?;
    out.text(&format!("{prefix}replacement.csv"), &report.replacement_csv())?;
    for (k, (e, p)) in report.empirical.iter().zip(&report.pde).enumerate() {
        out.text(&format!("{prefix}fields/empirical_{k}.csv"), &field_csv(e))?;
        out.text(&format!("{prefix}fields/pde_{k}.csv"), &field_csv(p))?;
        out.grid(&format!("{prefix}fields/empirical_{k}.bin"), &GridFile::from_field(e, report.base_seed))?;
        out.grid(&format!("{prefix}fields/pde_{k}.bin"), &GridFile::from_field(p, report.base_seed))?;
    }
    Ok(())
}

fn report_details(report: &ComparisonReport) -> serde_json::Value {
    serde_json::json!({
        "n": report.n,
        "effective_replicas": report.effective_replicas,
        "failures": report.failures,
        "mass_conserved": report.mass_conserved,
        "pde_mass_drift": report.pde_mass_drift,
        "environment_seeds": report.environment_seeds,
        "events": report.events,
    })
}

/// Runs the experiment named in `cfg` and writes its outputs under `dir`.
/// Returns the relative paths written.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let mut out = Output::new(dir)?;
    let seeds = |n: usize| (0..n).map(|r| environment_seed(cfg, r)).collect::<Vec<_>>();
    match cfg.experiment {
        Experiment::EnsembleTable => {
            out.text("ensemble_table.csv", &run_ensemble_table(cfg)?)?;
            out.manifest(cfg, Vec::new(), serde_json::Value::Null)
        }
        Experiment::Pde => {
            let trace = run_pde(cfg)?;
            let mut table = String::from("time,mass,min,max\n");
            for (k, (t, f)) in cfg.t_checkpoints.iter().zip(&trace.fields).enumerate() {
                writeln!(table, "{t},{},{},{}", f.mass(), f.min(), f.max()).unwrap();
                out.text(&format!("fields/pde_{k}.csv"), &field_csv(f))?;
                out.grid(&format!("fields/pde_{k}.bin"), &GridFile::from_field(f, cfg.base_seed))?;
            }
            out.text("pde.csv", &table)?;
            let details = serde_json::json!({ "initial_mass": trace.initial_mass, "mass_drift": trace.mass_drift });
            out.manifest(cfg, Vec::new(), details)
        }
        Experiment::Simulate => {
            let sim = run_simulate(cfg)?;
            out.text("simulate.csv", &sim.table)?;
            for (r, snaps) in sim.snapshots.iter().enumerate() {
                for (k, c) in snaps.iter().enumerate() {
                    out.grid(&format!("snapshots/replica_{r}_t{k}.bin"), &GridFile::from_config(c, cfg.base_seed))?;
                }
            }
            out.manifest(cfg, sim.environment_seeds, serde_json::Value::Null)
        }
        Experiment::Compare => {
            let report = run_compare(cfg)?;
            write_comparison(&report, &mut out, "")?;
            if cfg.environment_policy == EnvironmentPolicy::Shared {
                let env = EnvironmentField::sample(&cfg.environment_model(), LatticeShape::new(cfg.d, cfg.n)?, cfg.base_seed)?;
                out.grid("environment.bin", &GridFile::from_environment(&env))?;
            }
            let details = report_details(&report);
            out.manifest(cfg, seeds(cfg.replicas), details)
        }
        Experiment::Sweep => {
            let reports = run_sweep(cfg)?;
            let mut table = String::from("n,time,quantity,mean,sd,count\n");
            for r in &reports {
                for c in &r.checkpoints {
                    writeln!(table, "{},{},rel_l1_of_mean,{},,{}", r.n, c.time, c.rel_l1_of_mean, c.rel_l1.count).unwrap();
                    writeln!(table, "{},{},rel_l1,{},{},{}", r.n, c.time, c.rel_l1.mean, c.rel_l1.sd, c.rel_l1.count).unwrap();
                    for rep in &c.replacement {
                        let s = rep.time_average;
                        writeln!(table, "{},{},replacement_l{},{},{},{}", r.n, c.time, rep.l, s.mean, s.sd, s.count).unwrap();
                    }
                    if let Some(s) = c.two_blocks {
                        writeln!(table, "{},{},two_blocks,{},{},{}", r.n, c.time, s.mean, s.sd, s.count).unwrap();
                    }
                }
                write_comparison(r, &mut out, &format!("n{}/", r.n))?;
            }
            out.text("sweep.csv", &table)?;
            let details = serde_json::Value::Array(reports.iter().map(report_details).collect());
            out.manifest(cfg, seeds(cfg.replicas), details)
        }
        Experiment::Condense => {
            let report = run_condense(cfg)?;
            out.text("condense.csv", &report.to_csv())?;
            out.text("condense_summary.csv", &report.summary_csv())?;
            let details = serde_json::json!({
                "successes": report.successes,
                "replicas": report.traces.len(),
                "failures": report.failures,
                "warnings": report.warnings,
            });
            out.manifest(cfg, seeds(cfg.replicas), details)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::RateShape;
    use crate::environment::{EnvironmentModel, Profile};
    use crate::kmc::InitialCondition;

    fn small(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn ensemble_table_rows() {
        let cfg = small("d = 1\ntable_phi = [0.0, 1.0, 2.0]\ntable_u = [[0.5]]");
        let t = run_ensemble_table(&cfg).unwrap();
        let rows: Vec<Vec<&str>> = t.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 3);
        // φ = 0: Z = 1, M = 0
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
        // g(n) = n: M(φ) = φ
        for r in &rows {
            let phi: f64 = r[1].parse().unwrap();
            assert!((r[3].parse::<f64>().unwrap() - phi).abs() <= 1e-12);
        }

        let cfg = small("d = 1\nrate = { kind = \"constant\", level = 3.0 }\ntable_phi = [1.0, 3.0]\ntable_u = [[0.5]]");
        let t = run_ensemble_table(&cfg).unwrap();
        let rows: Vec<Vec<&str>> = t.lines().skip(1).map(|l| l.split(',').collect()).collect();
        // geometric series Σ (1/3)^n
        assert!((rows[0][2].parse::<f64>().unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(rows[1][2], "");
    }

    #[test]
    fn constant_fields_compare_to_sampling_noise() {
        // flat environment, flat start: the PDE stays constant and the error is pure noise
        let mut cfg = small("d = 1\nn = 64\nm = 16\nreplicas = 4\nt_checkpoints = [0.0, 0.01]\nball_radius = 0.1");
        cfg.environment = Some(EnvironmentModel::PoissonMolecules { theta: Profile::Constant { value: 0.0 }, nu: 0.5, chi0: 2.0 });
        let r = run_compare(&cfg).unwrap();
        assert!(r.mass_conserved);
        assert!(r.pde_mass_drift <= 1e-12);
        assert!(r.pde.iter().all(|f| f.values.iter().all(|v| (v - 4.0).abs() < 1e-12)));
        // at t = 0 both sides are exactly 4 up to the ball discretization
        let c0 = &r.checkpoints[0];
        assert_eq!(c0.particle_mass.mean, 4.0);
        let cover = BallCover::on_grid(LatticeShape::new(1, 64).unwrap(), LatticeShape::new(1, 16).unwrap(), 0.1);
        assert!((c0.rel_l1_of_mean - (cover.volume_ratio() - 1.0).abs()).abs() < 1e-12);
        // later the error is Poisson-like noise around a constant
        let c1 = &r.checkpoints[1];
        assert!(c1.rel_l1.mean < 0.2, "{:?}", c1.rel_l1);
        assert!(c1.rel_l1_of_mean < c1.rel_l1.mean);
    }

    #[test]
    fn more_replicas_reduce_the_noise() {
        let base = "d = 1\nn = 64\nm = 16\nt_checkpoints = [0.01]\nball_radius = 0.1\nenvironment = { kind = \"poisson_molecules\", nu = 0.5, chi0 = 2.0, theta = { kind = \"constant\", value = 0.0 } }";
        let few = run_compare(&small(&format!("{base}\nreplicas = 2"))).unwrap();
        let many = run_compare(&small(&format!("{base}\nreplicas = 32"))).unwrap();
        assert!(many.checkpoints[0].rel_l1_of_mean < few.checkpoints[0].rel_l1_of_mean);
    }

    #[test]
    fn compare_is_reproducible() {
        let text = "d = 2\nn = 16\nm = 8\nreplicas = 3\nt_checkpoints = [0.001, 0.002]\ndiagnostic_samples = 2";
        let a = run_compare(&small(text)).unwrap();
        let b = run_compare(&small(text)).unwrap();
        assert_eq!(a.checkpoints_csv(), b.checkpoints_csv());
        assert_eq!(a.replacement_csv(), b.replacement_csv());
        assert_eq!(a.checkpoints[0].replacement[0].time_average.count, 3);
        let dir = tempfile::tempdir().unwrap();
        let files = run_experiment(&small(text), dir.path()).unwrap();
        assert!(files.contains(&"manifest.json".to_string()));
        assert!(files.contains(&"environment.bin".to_string()));
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains(&sha256_hex(small(text).to_toml().as_bytes())));
    }

    #[test]
    fn compare_rejects_point_mass() {
        let mut cfg = small("d = 1\nn = 16\nm = 8");
        cfg.initial = InitialCondition::PointMass { at: vec![0.5], count: 10 };
        assert!(run_compare(&cfg).unwrap_err().is_validation());
    }

    #[test]
    fn single_site_fraction_is_one() {
        let shape = LatticeShape::new(1, 1).unwrap();
        let mut c = ParticleConfig::empty(shape);
        assert_eq!(max_site_fraction(&c), 0.0);
        c.add(0, 17);
        assert_eq!(max_site_fraction(&c), 1.0);
    }

    #[test]
    fn critical_density_of_two_rate_levels() {
        // r = 1/2 on the three fast sites: 3 · 1 / 4
        assert!((realized_critical_density(&[1.0, 2.0, 2.0, 2.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn subcritical_constant_rate_stays_spread_out() {
        // homogeneous rates never condense; at density 1 the one-site law is
        // geometric with ratio 1/2, so P(max ≥ k) ≤ V 2^{-k}
        let mut cfg = small("d = 2\nn = 32\nrate = { kind = \"constant\", level = 3.0 }\nreplicas = 2\nt_checkpoints = [0.5, 1.0]");
        cfg.environment = Some(EnvironmentModel::PoissonMolecules { theta: Profile::Constant { value: 0.0 }, nu: 0.5, chi0: 2.0 });
        cfg.initial = InitialCondition::Uniform { value: 1 };
        let r = run_condense(&cfg).unwrap();
        assert_eq!(r.successes, 0);
        assert!(!r.warnings.is_empty());
        let volume = 1024.0f64;
        let bound = (volume.log2() + 20.0) / volume;
        for t in &r.traces {
            for &(_, frac, _) in &t.samples {
                assert!(frac < bound, "{frac}");
            }
        }
    }

    #[test]
    fn condense_requires_constant_rate() {
        let cfg = small("experiment = \"condense\"\nd = 1\nn = 8");
        assert!(run_condense(&cfg).unwrap_err().is_validation());
        let mut cfg = cfg;
        cfg.rate = RateShape::Constant { level: 3.0 };
        assert!(run_condense(&cfg).is_ok());
    }
}
