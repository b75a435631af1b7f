use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sumtree::SumTree;
use crate::ensemble::RateFunction;
use crate::environment::EnvironmentField;
use crate::error::{Error, Result};
use crate::lattice::{LatticeShape, ParticleConfig};
use crate::rng::{exponential, stream, Purpose};

/// One executed jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub source: usize,
    pub target: usize,
    /// Macroscopic time elapsed since the previous event.
    pub waiting_time: f64,
    /// Macroscopic time of the jump.
    pub time: f64,
}

/// How the next jumping site is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// `Walkers` for `g(n) = s·n`, `RateTree` otherwise.
    #[default]
    Auto,
    /// Sum tree over per-site exit rates; works for every `g`.
    RateTree,
    /// Uniform particle choice thinned by `p(x)/max p`. Only valid for
    /// `g(n) = s·n`, where particles are exchangeable independent walkers.
    Walkers,
}

#[derive(Debug, Clone)]
enum Sampler {
    Tree(SumTree),
    Walkers {
        /// Site of every particle; the order carries no meaning.
        pos: Vec<u32>,
        p_max: f64,
        /// Microscopic attempt rate of the whole system, `2d·s·max p·K`.
        attempt_rate: f64,
        /// Particle that performs the pending jump.
        chosen: usize,
    },
}

/// Continuous-time simulator of the zero-range process under diffusive
/// scaling.
///
/// Every directed bond `(x, y)` fires at rate `N²·g(η(x))·p(x)`. The clock
/// holds macroscopic time. The next event is drawn as soon as the previous
/// one has been applied, so stopping the clock at an observation time and
/// resuming does not change the trajectory.
#[derive(Debug, Clone)]
pub struct SimulatorState {
    cfg: ParticleConfig,
    env: Arc<EnvironmentField>,
    g: RateFunction,
    neighbors: Vec<u32>,
    sampler: Sampler,
    time: f64,
    last_event: f64,
    next_event: f64,
    speedup: f64,
    rng_wait: ChaCha8Rng,
    rng_site: ChaCha8Rng,
    rng_dir: ChaCha8Rng,
    rng_sweep_site: ChaCha8Rng,
    rng_sweep_fire: ChaCha8Rng,
    events: u64,
    log: Option<EventLog>,
}

/// Bounded in-memory record of jumps.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub cap: usize,
    pub entries: Vec<(f64, u32, u32)>,
    pub dropped: u64,
}

impl EventLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("macro_time,source,target\n");
        for (t, a, b) in &self.entries {
            s.push_str(&format!("{t},{a},{b}\n"));
        }
        s
    }
}

fn walker_positions(cfg: &ParticleConfig) -> Vec<u32> {
    let mut pos = Vec::with_capacity(cfg.total() as usize);
    for (x, &n) in cfg.occupations().iter().enumerate() {
        pos.extend(std::iter::repeat_n(x as u32, n as usize));
    }
    pos
}

impl SimulatorState {
    pub fn new(cfg: ParticleConfig, env: Arc<EnvironmentField>, g: RateFunction, seed: u64, replica: u64) -> Result<Self> {
        Self::with_sampler(cfg, env, g, seed, replica, SamplerKind::Auto)
    }

    pub fn with_sampler(
        cfg: ParticleConfig,
        env: Arc<EnvironmentField>,
        g: RateFunction,
        seed: u64,
        replica: u64,
        kind: SamplerKind,
    ) -> Result<Self> {
        let shape = cfg.shape();
        if env.shape() != shape {
            return Err(Error::GridMismatch(format!(
                "configuration on {:?} but environment on {:?}",
                shape,
                env.shape()
            )));
        }
        let dirs = shape.directions();
        let mut neighbors = Vec::with_capacity(shape.volume() * dirs);
        for x in 0..shape.volume() {
            for dir in 0..dirs {
                neighbors.push(shape.neighbor(x, dir) as u32);
            }
        }
        let walkers = match (kind, g.linear_slope()) {
            (SamplerKind::RateTree, _) => None,
            (SamplerKind::Auto | SamplerKind::Walkers, Some(slope)) => Some(slope),
            (SamplerKind::Auto, None) => None,
            (SamplerKind::Walkers, None) => {
                return Err(Error::Validation("the walker sampler needs g(n) = s·n".into()));
            }
        };
        let sampler = match walkers {
            Some(slope) => {
                let p_max = env.rates().iter().copied().fold(0.0, f64::max);
                Sampler::Walkers {
                    pos: walker_positions(&cfg),
                    p_max,
                    attempt_rate: dirs as f64 * slope * p_max * cfg.total() as f64,
                    chosen: 0,
                }
            }
            None => {
                let rates: Vec<f64> = (0..shape.volume())
                    .map(|x| dirs as f64 * g.eval(cfg.get(x)) * env.rates()[x])
                    .collect();
                Sampler::Tree(SumTree::new(&rates))
            }
        };
        let mut state = Self {
            sampler,
            cfg,
            env,
            g,
            neighbors,
            time: 0.0,
            last_event: 0.0,
            next_event: f64::INFINITY,
            speedup: (shape.n * shape.n) as f64,
            rng_wait: stream(seed, replica, Purpose::WaitingTime),
            rng_site: stream(seed, replica, Purpose::SiteChoice),
            rng_dir: stream(seed, replica, Purpose::Direction),
            rng_sweep_site: stream(seed, replica, Purpose::SweepSite),
            rng_sweep_fire: stream(seed, replica, Purpose::SweepFire),
            events: 0,
            log: None,
        };
        state.schedule();
        Ok(state)
    }

    /// Which sampler is in use.
    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            Sampler::Tree(_) => SamplerKind::RateTree,
            Sampler::Walkers { .. } => SamplerKind::Walkers,
        }
    }

    /// Keeps the first `cap` jumps in memory.
    pub fn enable_event_log(&mut self, cap: usize) {
        self.log = Some(EventLog { cap, ..Default::default() });
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    /// Draws the time of the next event (and, for walkers, its particle).
    fn schedule(&mut self) {
        let rates = self.env.rates();
        match &mut self.sampler {
            Sampler::Tree(tree) => {
                let total = tree.total();
                self.next_event = if total > 0.0 {
                    self.time + exponential(&mut self.rng_wait, self.speedup * total)
                } else {
                    f64::INFINITY
                };
            }
            Sampler::Walkers { pos, p_max, attempt_rate, chosen } => {
                if pos.is_empty() || *attempt_rate <= 0.0 {
                    self.next_event = f64::INFINITY;
                    return;
                }
                // thinning of a constant-rate attempt clock; p ≥ a > 0 so this terminates
                let rate = self.speedup * *attempt_rate;
                let mut t = self.time;
                loop {
                    t += exponential(&mut self.rng_wait, rate);
                    let i = self.rng_site.random_range(0..pos.len());
                    let u: f64 = self.rng_site.random();
                    if u * *p_max < rates[pos[i] as usize] {
                        *chosen = i;
                        break;
                    }
                }
                self.next_event = t;
            }
        }
    }

    #[inline]
    fn exit_rate(&self, x: usize) -> f64 {
        self.shape().directions() as f64 * self.g.eval(self.cfg.get(x)) * self.env.rates()[x]
    }

    pub fn shape(&self) -> LatticeShape {
        self.cfg.shape()
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.cfg
    }

    pub fn environment(&self) -> &EnvironmentField {
        &self.env
    }

    pub fn rate_function(&self) -> &RateFunction {
        &self.g
    }

    /// Macroscopic time.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Microscopic time, `N²` times the macroscopic clock.
    pub fn micro_time(&self) -> f64 {
        self.time * self.speedup
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// `Σ_x 2d·g(η(x))·p(x)` in microscopic units. Constant time for the
    /// rate tree, a full pass over the lattice for walkers.
    pub fn total_exit_rate(&self) -> f64 {
        match &self.sampler {
            Sampler::Tree(tree) => tree.total(),
            Sampler::Walkers { .. } => (0..self.shape().volume()).map(|x| self.exit_rate(x)).sum(),
        }
    }

    /// Per-site exit rates, as stored by the rate tree or recomputed for walkers.
    pub fn site_rates(&self) -> Vec<f64> {
        match &self.sampler {
            Sampler::Tree(tree) => tree.leaves(),
            Sampler::Walkers { .. } => (0..self.shape().volume()).map(|x| self.exit_rate(x)).collect(),
        }
    }

    /// Largest relative mismatch between the sampler's bookkeeping and a
    /// full recomputation from the configuration.
    pub fn audit_rates(&self) -> f64 {
        match &self.sampler {
            Sampler::Tree(tree) => {
                let fresh: Vec<f64> = (0..self.shape().volume()).map(|x| self.exit_rate(x)).collect();
                tree.audit(&fresh)
            }
            Sampler::Walkers { pos, .. } => {
                let mut counts = vec![0u32; self.shape().volume()];
                pos.iter().for_each(|&x| counts[x as usize] += 1);
                if counts == self.cfg.occupations() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    #[inline]
    fn jump(&mut self) -> (usize, usize) {
        let dirs = self.shape().directions();
        let source = match &self.sampler {
            Sampler::Tree(tree) => tree.sample(self.rng_site.random::<f64>() * tree.total()),
            Sampler::Walkers { pos, chosen, .. } => pos[*chosen] as usize,
        };
        let dir = self.rng_dir.random_range(0..dirs);
        let target = self.neighbors[source * dirs + dir] as usize;
        self.cfg.move_particle(source, target);
        match &mut self.sampler {
            Sampler::Tree(_) => {
                let (rs, rt) = (self.exit_rate(source), self.exit_rate(target));
                if let Sampler::Tree(tree) = &mut self.sampler {
                    tree.set_pair(source, rs, target, rt);
                }
            }
            Sampler::Walkers { pos, chosen, .. } => pos[*chosen] = target as u32,
        }
        (source, target)
    }

    /// Applies the next event. Errors with `Frozen` when no particle can move.
    pub fn kmc_step(&mut self) -> Result<JumpRecord> {
        if !self.next_event.is_finite() {
            return Err(Error::Frozen);
        }
        let waiting_time = self.next_event - self.last_event;
        self.time = self.next_event;
        self.last_event = self.time;
        let (source, target) = self.jump();
        self.events += 1;
        if let Some(log) = &mut self.log {
            if log.entries.len() < log.cap {
                log.entries.push((self.time, source as u32, target as u32));
            } else {
                log.dropped += 1;
            }
        }
        let record = JumpRecord { source, target, waiting_time, time: self.time };
        self.schedule();
        Ok(record)
    }

    /// Advances to macroscopic time `t`, applying every event strictly before it.
    fn advance(&mut self, t: f64) {
        while self.next_event < t {
            // the event exists because next_event is finite
            let _ = self.kmc_step();
        }
        self.time = self.time.max(t);
    }

    /// Runs until macroscopic time `t_end`. `observe` is called at each time of
    /// `observer_times` inside `[time, t_end]` with the state just before that
    /// instant.
    pub fn run_to_time(
        &mut self,
        t_end: f64,
        observer_times: &[f64],
        mut observe: impl FnMut(f64, &SimulatorState),
    ) -> Result<()> {
        if t_end < self.time {
            return Err(Error::Validation(format!("cannot run back from {} to {t_end}", self.time)));
        }
        let mut times: Vec<f64> = observer_times.iter().copied().filter(|&s| s >= self.time && s <= t_end).collect();
        times.sort_by(f64::total_cmp);
        for s in times {
            self.advance(s);
            observe(s, self);
        }
        self.advance(t_end);
        Ok(())
    }

    /// One random-sequential-update sweep covering microscopic time `dt_micro`.
    ///
    /// `N^d` attempts each pick a uniform site and fire one of its bonds with
    /// probability `exit rate · dt_micro`. First order in `dt_micro`.
    pub fn rsu_sweep(&mut self, dt_micro: f64) -> Result<()> {
        let volume = self.shape().volume();
        let max_rate = (0..volume).map(|x| self.exit_rate(x)).fold(0.0, f64::max);
        if !(dt_micro > 0.0) || dt_micro * max_rate > 0.1 {
            return Err(Error::TimestepTooLarge { product: dt_micro * max_rate, limit: 0.1 });
        }
        let dirs = self.shape().directions();
        for _ in 0..volume {
            let x = self.rng_sweep_site.random_range(0..volume);
            let r = self.exit_rate(x);
            if r == 0.0 {
                continue;
            }
            if self.rng_sweep_fire.random::<f64>() < r * dt_micro {
                let dir = self.rng_sweep_fire.random_range(0..dirs);
                let y = self.neighbors[x * dirs + dir] as usize;
                self.cfg.move_particle(x, y);
                let (rx, ry) = (self.exit_rate(x), self.exit_rate(y));
                if let Sampler::Tree(tree) = &mut self.sampler {
                    tree.set_pair(x, rx, y, ry);
                }
                self.events += 1;
            }
        }
        if let Sampler::Walkers { pos, .. } = &mut self.sampler {
            *pos = walker_positions(&self.cfg);
        }
        self.time += dt_micro / self.speedup;
        self.last_event = self.time;
        // the pending continuous-time event refers to the old configuration
        self.schedule();
        Ok(())
    }
}
