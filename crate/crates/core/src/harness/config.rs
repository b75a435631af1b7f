use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{RateFunction, RateShape};
use crate::environment::EnvironmentModel;
use crate::error::{Error, Result};
use crate::kmc::{InitialCondition, SamplerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    EnsembleTable,
    Simulate,
    Pde,
    #[default]
    Compare,
    Condense,
    Sweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::EnsembleTable => "ensemble_table",
            Experiment::Simulate => "simulate",
            Experiment::Pde => "pde",
            Experiment::Compare => "compare",
            Experiment::Condense => "condense",
            Experiment::Sweep => "sweep",
        }
    }
}

/// Whether replicas share one environment realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentPolicy {
    /// One environment for every replica, drawn from `base_seed`.
    #[default]
    Shared,
    /// A fresh environment per replica.
    Resampled,
}

/// Everything an experiment needs. Parsed from TOML; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    /// Lattice side.
    pub n: usize,
    /// PDE grid side; also the grid of ball centres used for comparisons.
    pub m: usize,
    pub rate: RateShape,
    /// Filled with the chemotaxis default for `d` when absent.
    pub environment: Option<EnvironmentModel>,
    pub initial: InitialCondition,
    pub t_checkpoints: Vec<f64>,
    pub replicas: usize,
    pub base_seed: u64,
    pub ball_radius: f64,
    /// Half-width of the blocks in the replacement diagnostic.
    pub block_l: usize,
    /// Further block half-widths evaluated next to `block_l`.
    pub extra_block_l: Vec<usize>,
    /// Relative size of the large block in the two-blocks diagnostic; 0 turns it off.
    pub two_blocks_eps: f64,
    /// Equally spaced times in `(0, last checkpoint]` at which the
    /// replacement diagnostic is sampled.
    pub diagnostic_samples: usize,
    pub output_dir: PathBuf,
    pub environment_policy: EnvironmentPolicy,
    pub sampler: SamplerKind,
    /// Lattice sides visited by `sweep`.
    pub sweep_n: Vec<usize>,
    /// Fugacities tabulated by `ensemble_table`.
    pub table_phi: Vec<f64>,
    /// Macroscopic points tabulated by `ensemble_table`; filled when empty.
    pub table_u: Vec<Vec<f64>>,
    /// Max-site fraction that counts as a condensate.
    pub condense_fraction: f64,
    /// Rank fraction of the lowest rates that counts as co-located.
    pub condense_bottom: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Compare,
            d: 2,
            n: 250,
            m: 64,
            rate: RateShape::Linear { slope: 1.0 },
            environment: None,
            initial: InitialCondition::default(),
            t_checkpoints: vec![0.0008, 0.004, 0.01, 0.04, 0.2],
            replicas: 8,
            base_seed: 1,
            ball_radius: 0.05,
            block_l: 2,
            extra_block_l: Vec::new(),
            two_blocks_eps: 0.05,
            diagnostic_samples: 10,
            output_dir: PathBuf::from("out"),
            environment_policy: EnvironmentPolicy::Shared,
            sampler: SamplerKind::Auto,
            sweep_n: vec![48, 96, 192],
            table_phi: (0..=10).map(|i| 0.25 * i as f64).collect(),
            table_u: Vec::new(),
            condense_fraction: 0.1,
            condense_bottom: 0.01,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_on_line(text: &str, line: usize) -> String {
    text.lines()
        .nth(line.saturating_sub(1))
        .and_then(|l| l.split_once('='))
        .map(|(k, _)| k.trim().to_string())
        .unwrap_or_default()
}

impl ExperimentConfig {
    /// Parses TOML text, fills defaults and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::Parse { line, field: key_on_line(text, line), message: e.message().to_string() }
        })?;
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills the dimension-dependent defaults.
    pub fn normalize(&mut self) {
        if self.environment.is_none() {
            self.environment = Some(EnvironmentModel::default_chemotaxis(self.d));
        }
        if self.table_u.is_empty() && self.d >= 1 {
            self.table_u = (0..10)
                .map(|i| {
                    let mut u = vec![0.5; self.d];
                    u[0] = 0.5 + 0.05 * i as f64;
                    u
                })
                .collect();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The environment model; present after `normalize`.
    pub fn environment_model(&self) -> EnvironmentModel {
        self.environment.clone().unwrap_or_else(|| EnvironmentModel::default_chemotaxis(self.d))
    }

    pub fn rate_function(&self) -> Result<RateFunction> {
        RateFunction::new(self.rate.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(1..=3).contains(&self.d) {
            return bad(format!("d must be 1, 2 or 3, got {}", self.d));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.m < 8 {
            return bad(format!("m must be at least 8, got {}", self.m));
        }
        if self.base_seed > i64::MAX as u64 {
            return bad(format!("base_seed must fit a TOML integer (at most {}), got {}", i64::MAX, self.base_seed));
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if !(self.ball_radius > 0.0 && self.ball_radius < 0.5) {
            return bad(format!("ball_radius must lie in (0, 0.5), got {}", self.ball_radius));
        }
        if self.t_checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("t_checkpoints must be finite and nonnegative".into());
        }
        if self.t_checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("t_checkpoints must be strictly increasing".into());
        }
        if !(self.two_blocks_eps >= 0.0 && self.two_blocks_eps < 0.5) {
            return bad(format!("two_blocks_eps must lie in [0, 0.5), got {}", self.two_blocks_eps));
        }
        if self.sweep_n.iter().any(|&n| n < 2) {
            return bad("sweep_n entries must be at least 2".into());
        }
        for (name, v) in [("condense_fraction", self.condense_fraction), ("condense_bottom", self.condense_bottom)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.table_phi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("table_phi entries must be finite and nonnegative".into());
        }
        if self.table_u.iter().any(|u| u.len() != self.d) {
            return bad(format!("table_u points need {} coordinates", self.d));
        }
        let g = self.rate_function()?;
        g.validate(64)?;
        self.environment_model().validate(self.d)?;
        self.initial.validate(self.d)?;
        if self.sampler == SamplerKind::Walkers && g.linear_slope().is_none() {
            return bad("the walker sampler needs a linear rate function".into());
        }
        Ok(())
    }
}

/// Reads, normalizes and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Profile;

    #[test]
    fn empty_file_gives_chemotaxis_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.d, 2);
        assert_eq!(cfg.n, 250);
        assert_eq!(cfg.ball_radius, 0.05);
        assert_eq!(cfg.initial, InitialCondition::Uniform { value: 4 });
        assert_eq!(cfg.t_checkpoints, vec![0.0008, 0.004, 0.01, 0.04, 0.2]);
        assert_eq!(cfg.replicas, 8);
        let Some(EnvironmentModel::PoissonMolecules { theta, nu, chi0 }) = &cfg.environment else {
            panic!("default environment")
        };
        assert_eq!((*nu, *chi0), (0.5, 2.0));
        assert_eq!(theta, &Profile::Gaussian { amplitude: 30.0, width: 60.0, center: vec![0.5, 0.5] });
    }

    #[test]
    fn zero_replicas_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("replicas = 0"), Err(Error::Validation(_))));
    }

    #[test]
    fn invariants_rejected() {
        let cfg = ExperimentConfig { base_seed: u64::MAX, ..Default::default() };
        assert!(cfg.validate().unwrap_err().is_validation());
        for text in ["ball_radius = 0.5", "t_checkpoints = [0.2, 0.1]", "d = 4", "m = 4", "rate = { kind = \"linear\", slope = -1.0 }"] {
            let e = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(e.is_validation(), "{text}: {e}");
        }
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let e = ExperimentConfig::from_toml("d = 2\nreplicas = \"many\"\n").unwrap_err();
        let Error::Parse { line, field, .. } = e else { panic!("{e}") };
        assert_eq!(line, 2);
        assert_eq!(field, "replicas");
        assert!(matches!(ExperimentConfig::from_toml("colour = 1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn nested_specs_parse() {
        let text = r#"
experiment = "condense"
d = 1
n = 32
rate = { kind = "constant", level = 3.0 }
environment = { kind = "additive", a = 0.5, b = 2.0, v = { kind = "constant", value = 1.0 }, q = { kind = "uniform" } }
initial = { kind = "poisson_profile", profile = { kind = "cosine", mean = 2.0, amplitude = 1.0 } }
sampler = "rate_tree"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment, Experiment::Condense);
        assert_eq!(cfg.rate, RateShape::Constant { level: 3.0 });
        assert!(matches!(cfg.environment, Some(EnvironmentModel::Additive { .. })));
        assert_eq!(cfg.table_u[0], vec![0.5]);
    }

    #[test]
    fn serialization_roundtrip_is_normal_form() {
        for text in ["", "d = 1\nn = 40\nreplicas = 3", "experiment = \"sweep\"\nsweep_n = [8, 16]\ntwo_blocks_eps = 0.1"] {
            let cfg = ExperimentConfig::from_toml(text).unwrap();
            let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(again.to_toml(), cfg.to_toml());
        }
    }
}
