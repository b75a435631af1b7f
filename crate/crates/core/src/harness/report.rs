use std::fmt::Write as _;

use serde::Serialize;

use crate::lattice::DensityField;

/// Sample mean with its standard deviation and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for one sample.
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, count: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, count: n }
    }
}

/// Replacement diagnostic for one block half-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplacementStat {
    pub l: usize,
    /// Replica spread of the time average over samples up to the checkpoint.
    pub time_average: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub time: f64,
    pub l1: Summary,
    pub l2: Summary,
    pub linf: Summary,
    /// Per-replica L1 error over the PDE mass.
    pub rel_l1: Summary,
    /// Relative L1 error of the replica-mean field; the headline number.
    pub rel_l1_of_mean: f64,
    /// Particle total over `N^d`, averaged over replicas.
    pub particle_mass: Summary,
    /// Integral of the ball-averaged field.
    pub coarse_mass: Summary,
    pub pde_mass: f64,
    pub replacement: Vec<ReplacementStat>,
    /// Only computed at the last checkpoint.
    pub two_blocks: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicaFailure {
    pub replica: usize,
    pub message: String,
}

/// Outcome of one particle-versus-PDE comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub checkpoints: Vec<CheckpointStats>,
    /// Replicas that finished; failed ones are listed in `failures`.
    pub effective_replicas: usize,
    pub failures: Vec<ReplicaFailure>,
    /// Particle totals never changed in any finished replica.
    pub mass_conserved: bool,
    /// Largest relative drift of the PDE mass over the run.
    pub pde_mass_drift: f64,
    pub config_hash: String,
    pub code_version: String,
    pub base_seed: u64,
    pub environment_seeds: Vec<u64>,
    pub events: u64,
    #[serde(skip)]
    pub empirical: Vec<DensityField>,
    #[serde(skip)]
    pub pde: Vec<DensityField>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    /// One row per checkpoint.
    pub fn checkpoints_csv(&self) -> String {
        let mut s = String::from(
            "time,replicas,l1_mean,l1_sd,l2_mean,l2_sd,linf_mean,linf_sd,rel_l1_mean,rel_l1_sd,rel_l1_of_mean,\
             particle_mass_mean,particle_mass_sd,coarse_mass_mean,coarse_mass_sd,pde_mass,two_blocks_mean,two_blocks_sd\n",
        );
        for c in &self.checkpoints {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.time,
                c.rel_l1.count,
                c.l1.mean,
                c.l1.sd,
                c.l2.mean,
                c.l2.sd,
                c.linf.mean,
                c.linf.sd,
                c.rel_l1.mean,
                c.rel_l1.sd,
                c.rel_l1_of_mean,
                c.particle_mass.mean,
                c.particle_mass.sd,
                c.coarse_mass.mean,
                c.coarse_mass.sd,
                c.pde_mass,
                opt(c.two_blocks.map(|t| t.mean)),
                opt(c.two_blocks.map(|t| t.sd)),
            )
            .unwrap();
        }
        s
    }

    /// Replacement diagnostic, one row per checkpoint and block size.
    pub fn replacement_csv(&self) -> String {
        let mut s = String::from("time,l,mean,sd,count\n");
        for c in &self.checkpoints {
            for r in &c.replacement {
                let t = r.time_average;
                writeln!(s, "{},{},{},{},{}", c.time, r.l, t.mean, t.sd, t.count).unwrap();
            }
        }
        s
    }

    pub fn checkpoint_near(&self, t: f64) -> Option<usize> {
        (0..self.checkpoints.len()).min_by(|&a, &b| {
            (self.checkpoints[a].time - t).abs().total_cmp(&(self.checkpoints[b].time - t).abs())
        })
    }
}

/// Trajectory summary of one condensation replica.
#[derive(Debug, Clone, Serialize)]
pub struct CondensationTrace {
    pub replica: usize,
    pub environment_seed: u64,
    pub particles: u64,
    /// `(time, max occupancy / total, argmax site)` at each checkpoint.
    pub samples: Vec<(f64, f64, usize)>,
    /// Fraction of sites whose rate is strictly below the rate at the final
    /// argmax site.
    pub rate_rank: f64,
    /// Site with the most molecules; `None` without a molecule field.
    pub zeta_argmax: Option<usize>,
    /// Density above which the realized environment must condense.
    pub critical_density: f64,
    pub condensed: bool,
    pub co_located: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CondensationReport {
    pub traces: Vec<CondensationTrace>,
    pub failures: Vec<ReplicaFailure>,
    /// Replicas with both a condensate and co-location at the last checkpoint.
    pub successes: usize,
    pub warnings: Vec<String>,
    pub config_hash: String,
}

impl CondensationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("replica,time,max_fraction,argmax_site\n");
        for t in &self.traces {
            for (time, frac, site) in &t.samples {
                writeln!(s, "{},{time},{frac},{site}", t.replica).unwrap();
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "replica,environment_seed,particles,critical_density,final_fraction,argmax_site,rate_rank,zeta_argmax,condensed,co_located\n",
        );
        for t in &self.traces {
            let (frac, site) = t.samples.last().map(|&(_, f, x)| (f, x)).unwrap_or((f64::NAN, 0));
            writeln!(
                s,
                "{},{},{},{},{frac},{site},{},{},{},{}",
                t.replica,
                t.environment_seed,
                t.particles,
                t.critical_density,
                t.rate_rank,
                t.zeta_argmax.map(|z| z.to_string()).unwrap_or_default(),
                t.condensed,
                t.co_located
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.count, 4);
        assert_eq!(Summary::of(&[7.0]).sd, 0.0);
        assert_eq!(Summary::of(&[]).count, 0);
    }
}
