//! Continuous-time simulation of the exclusion process with Glauber reactions.
//!
//! Exchanges happen at rate `n^2` on each of the `d n^d` edges whatever the
//! occupations, so they form a state-independent Poisson process of rate
//! `n^2 d n^d` whose events are uniform edge swaps. Flip proposals form an
//! independent Poisson process of rate `c_max n^d` at uniform sites, accepted
//! with probability `c_x / c_max`. [`Engine::advance_to`] uses the
//! superposition directly: between consecutive flip proposals it draws the
//! number of exchanges from the Poisson law and performs them in a tight loop.
//! [`Engine::step`] realises the same chain one event at a time.

use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ModeEvaluator, ModeSeries};
use crate::lattice::{read_snapshot, write_snapshot, BoxRegion, ParticleConfig, Torus, TorusIndex};
use crate::theory::ModelParams;

/// `c_x(eta) = (a + (lambda / 2d) sum_{y ~ x} eta_y)(1 - eta_x) + b eta_x`.
pub fn reaction_rate(eta: &ParticleConfig, x: &TorusIndex, p: &ModelParams) -> f64 {
    if eta.get(x.linear()) {
        return p.b;
    }
    let occupied = eta.torus().neighbors(x).iter().filter(|y| eta.get(y.linear())).count();
    p.a + p.lambda / (2 * p.d) as f64 * occupied as f64
}

/// Initial law of the chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Product Bernoulli at the stable density.
    #[default]
    Stationary,
    Bernoulli(f64),
    /// Independent occupations with the given per-site densities.
    Profile(Vec<f64>),
    Fixed(Vec<u8>),
}

/// What each sample records besides the time and the mean density.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// Fourier modes on the half set `|k|_inf <= K`.
    pub mode_cutoff: Option<usize>,
    /// Occupancy-pattern counts on `B_R` pooled over every centre.
    pub box_radius: Option<usize>,
    /// Consecutive samples merged into one pattern histogram; `0` or `1`
    /// keeps one histogram per sample.
    #[serde(default)]
    pub box_block: usize,
    /// Keep a copy of the whole configuration at each sample.
    pub keep_configs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub seed: u64,
    pub burn_in: f64,
    pub sample_interval: f64,
    pub total_time: f64,
    pub replicas: usize,
    #[serde(default)]
    pub init: InitialCondition,
    #[serde(default)]
    pub observables: Observables,
}

impl SimConfig {
    /// Stationary-start configuration with the default burn-in `10 / |F'(rho*)|`.
    pub fn new(params: ModelParams, seed: u64, sample_interval: f64, total_time: f64, replicas: usize) -> Self {
        Self {
            params,
            seed,
            burn_in: params.default_burn_in(),
            sample_interval,
            total_time,
            replicas,
            init: InitialCondition::Stationary,
            observables: Observables::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.n < 3 {
            return Err(Error::Params("the simulator needs n >= 3".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.burn_in) && positive(self.sample_interval) && positive(self.total_time)) {
            return Err(Error::Params("burn_in, sample_interval and total_time must be > 0".into()));
        }
        if self.total_time <= self.burn_in {
            return Err(Error::Params("total_time must exceed burn_in".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Params("replicas must be >= 1".into()));
        }
        Ok(())
    }

    /// `burn_in + j * sample_interval` up to `total_time`.
    pub fn sample_times(&self) -> Vec<f64> {
        let count = ((self.total_time - self.burn_in) / self.sample_interval + 1e-9).floor() as usize + 1;
        (0..count).map(|j| self.burn_in + j as f64 * self.sample_interval).collect()
    }

    pub fn torus(&self) -> Result<Torus> {
        Torus::new(self.params.n, self.params.d)
    }
}

/// Compensated running sum for the model clock.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn new(v: f64) -> Self {
        Self { sum: v, comp: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub exchanges: u64,
    pub flip_proposals: u64,
    pub flips: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.exchanges + self.flip_proposals
    }
}

/// What a call to [`Engine::step`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Exchange { edge: usize },
    Flip { site: usize },
    Rejected { site: usize },
}

/// One replica of the chain with its own random stream.
#[derive(Clone, Debug)]
pub struct Engine {
    params: ModelParams,
    /// One byte per site; the working state of the hot loops.
    state: Vec<u8>,
    /// Packed copy of `state`, refreshed whenever control returns to the caller.
    eta: ParticleConfig,
    edges: Vec<[u32; 2]>,
    neighbors: Vec<u32>,
    rng: ChaCha8Rng,
    time: Kahan,
    next_flip: Option<Kahan>,
    c_max: f64,
    coupling: f64,
    flip_total: f64,
    exchange_total: f64,
    edge_bits: Option<u32>,
    counts: EventCounts,
}

/// Trailer tag of an engine checkpoint (after the lattice snapshot).
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RDXE";
pub const CHECKPOINT_VERSION: u16 = 1;

impl Engine {
    /// Engine at time 0 whose stream is `(seed, replica)`.
    pub fn new(params: ModelParams, eta: ParticleConfig, seed: u64, replica: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica);
        Self::with_rng(params, eta, rng, 0.0)
    }

    fn with_rng(params: ModelParams, eta: ParticleConfig, rng: ChaCha8Rng, time: f64) -> Result<Self> {
        params.validate()?;
        let t = *eta.torus();
        if t.n() != params.n || t.dim() != params.d {
            return Err(Error::Params("configuration does not live on the parameter torus".into()));
        }
        let edges = t.edge_table();
        let e = edges.len();
        let n2 = (t.n() * t.n()) as f64;
        let c_max = params.c_max();
        Ok(Self {
            params,
            state: eta.to_bits(),
            eta,
            neighbors: t.neighbor_table(),
            edges,
            rng,
            time: Kahan::new(time),
            next_flip: None,
            c_max,
            coupling: params.lambda / (2 * params.d) as f64,
            flip_total: c_max * t.sites() as f64,
            exchange_total: n2 * e as f64,
            edge_bits: e.is_power_of_two().then(|| e.trailing_zeros()),
            counts: EventCounts::default(),
        })
    }

    /// Draws the initial configuration from the replica's own stream.
    pub fn from_config(cfg: &SimConfig, replica: u64) -> Result<Self> {
        cfg.validate()?;
        let t = cfg.torus()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(replica);
        let eta = initial_configuration(t, &cfg.params, &cfg.init, &mut rng)?;
        Self::with_rng(cfg.params, eta, rng, 0.0)
    }

    pub fn time(&self) -> f64 {
        self.time.sum
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.eta
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    #[inline]
    fn rate_at(&self, x: usize) -> f64 {
        if self.state[x] == 1 {
            return self.params.b;
        }
        let deg = 2 * self.params.d;
        let occ: u32 = self.neighbors[x * deg..(x + 1) * deg].iter().map(|&y| self.state[y as usize] as u32).sum();
        self.params.a + self.coupling * occ as f64
    }

    /// Proposes a flip at a uniform site; returns the site and whether it flipped.
    #[inline]
    fn flip_proposal(&mut self) -> (usize, bool) {
        let x = self.rng.random_range(0..self.state.len());
        let rate = self.rate_at(x);
        let accept = self.rng.random::<f64>() * self.c_max < rate;
        self.counts.flip_proposals += 1;
        if accept {
            self.state[x] ^= 1;
            self.counts.flips += 1;
        }
        (x, accept)
    }

    /// Performs `count` uniform edge swaps.
    fn exchanges(&mut self, count: u64) {
        // Byte-per-site swaps: independent swaps do not serialise on a shared word.
        let words = self.state.as_mut_slice();
        let edges = &self.edges;
        let swap = |words: &mut [u8], e: usize| {
            let [x, y] = edges[e];
            let (x, y) = (x as usize, y as usize);
            let (a, b) = (words[x], words[y]);
            words[x] = b;
            words[y] = a;
        };
        match self.edge_bits {
            Some(bits) if bits > 0 && bits <= 32 => {
                // several edge indices per 64-bit draw
                let per = (64 / bits) as u64;
                let mask = (1u64 << bits) - 1;
                let mut left = count;
                while left > 0 {
                    let mut r = self.rng.next_u64();
                    for _ in 0..per.min(left) {
                        swap(words, (r & mask) as usize);
                        r >>= bits;
                    }
                    left -= per.min(left);
                }
            }
            _ => {
                // Lemire's multiply-shift with rejection, two 32-bit draws per word
                let e = edges.len() as u64;
                let threshold = ((1u64 << 32) - e) % e;
                let mut left = count;
                while left > 0 {
                    let r = self.rng.next_u64();
                    for half in [r & 0xffff_ffff, r >> 32] {
                        let m = half * e;
                        if m & 0xffff_ffff >= threshold && left > 0 {
                            swap(words, (m >> 32) as usize);
                            left -= 1;
                        }
                    }
                }
            }
        }
        self.counts.exchanges += count;
    }

    fn exchanges_during(&mut self, gap: f64) {
        let mu = self.exchange_total * gap;
        if mu > 0.0 {
            let count: f64 = Poisson::new(mu).map(|p| p.sample(&mut self.rng)).unwrap_or(mu.round());
            self.exchanges(count as u64);
        }
    }

    fn draw_flip_gap(&mut self) -> f64 {
        Exp::new(self.flip_total).expect("positive flip rate").sample(&mut self.rng)
    }

    /// Runs the chain up to model time `t_end` (no-op if already there).
    pub fn advance_to(&mut self, t_end: f64) {
        if t_end <= self.time.sum {
            return;
        }
        loop {
            let next = match self.next_flip {
                Some(k) => k,
                None => {
                    let mut k = self.time;
                    k.add(self.draw_flip_gap());
                    self.next_flip = Some(k);
                    k
                }
            };
            if next.sum <= t_end {
                self.exchanges_during(next.sum - self.time.sum);
                self.time = next;
                self.flip_proposal();
                let mut k = next;
                k.add(self.draw_flip_gap());
                self.next_flip = Some(k);
            } else {
                self.exchanges_during(t_end - self.time.sum);
                self.time = Kahan::new(t_end);
                break;
            }
        }
        self.sync();
    }

    fn sync(&mut self) {
        let t = *self.eta.torus();
        let state = &self.state;
        self.eta = ParticleConfig::from_fn(t, |x| state[x] == 1);
    }

    #[cfg(test)]
    fn flip_site(&mut self, x: usize) {
        self.state[x] ^= 1;
        self.sync();
    }

    /// One event of the uniformised chain with total rate
    /// `n^2 d n^d + c_max n^d`; returns the event and the waiting time.
    pub fn step(&mut self) -> (Event, f64) {
        let total = self.exchange_total + self.flip_total;
        let dt = Exp::new(total).expect("positive rate").sample(&mut self.rng);
        self.time.add(dt);
        // pending flip proposals are redrawn by memorylessness
        self.next_flip = None;
        let event = if self.rng.random::<f64>() * total < self.exchange_total {
            let edge = self.rng.random_range(0..self.edges.len());
            let [x, y] = self.edges[edge];
            self.state.swap(x as usize, y as usize);
            self.counts.exchanges += 1;
            Event::Exchange { edge }
        } else {
            match self.flip_proposal() {
                (site, true) => Event::Flip { site },
                (site, false) => Event::Rejected { site },
            }
        };
        self.sync();
        (event, dt)
    }

    /// Writes the lattice snapshot followed by the engine trailer, enough to
    /// resume bit-exactly.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        write_snapshot(&mut w, &self.eta, self.time.sum)?;
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for v in [self.params.a, self.params.b, self.params.lambda, self.time.sum, self.time.comp] {
            w.write_all(&v.to_le_bytes())?;
        }
        match self.next_flip {
            Some(k) => {
                w.write_all(&[1])?;
                w.write_all(&k.sum.to_le_bytes())?;
                w.write_all(&k.comp.to_le_bytes())?;
            }
            None => w.write_all(&[0; 17])?,
        }
        w.write_all(&self.rng.get_seed())?;
        w.write_all(&self.rng.get_stream().to_le_bytes())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        for c in [self.counts.exchanges, self.counts.flip_proposals, self.counts.flips] {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let (eta, _) = read_snapshot(&mut r)?;
        let mut head = [0u8; 6];
        r.read_exact(&mut head)?;
        if head[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing engine trailer".into()));
        }
        if u16::from_le_bytes([head[4], head[5]]) != CHECKPOINT_VERSION {
            return Err(Error::Format("unsupported engine trailer version".into()));
        }
        let mut f = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let (a, b, lambda, t_sum, t_comp) = (f()?, f()?, f()?, f()?, f()?);
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let nf_sum = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let nf_comp = f64::from_le_bytes(b8);
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        r.read_exact(&mut b8)?;
        let stream = u64::from_le_bytes(b8);
        let mut b16 = [0u8; 16];
        r.read_exact(&mut b16)?;
        let word_pos = u128::from_le_bytes(b16);
        let mut counts = [0u64; 3];
        for c in counts.iter_mut() {
            r.read_exact(&mut b8)?;
            *c = u64::from_le_bytes(b8);
        }
        let t = *eta.torus();
        let params = ModelParams::new(a, b, lambda, t.dim(), t.n())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let mut engine = Self::with_rng(params, eta, rng, t_sum)?;
        engine.time.comp = t_comp;
        engine.next_flip = (flag[0] == 1).then_some(Kahan { sum: nf_sum, comp: nf_comp });
        engine.counts = EventCounts { exchanges: counts[0], flip_proposals: counts[1], flips: counts[2] };
        Ok(engine)
    }
}

/// Draws the initial configuration of a replica.
pub fn initial_configuration<R: Rng + ?Sized>(
    t: Torus,
    p: &ModelParams,
    init: &InitialCondition,
    rng: &mut R,
) -> Result<ParticleConfig> {
    match init {
        InitialCondition::Stationary => Ok(ParticleConfig::bernoulli(t, p.rho_star(), rng)),
        InitialCondition::Bernoulli(rho) => {
            if !(0.0..=1.0).contains(rho) {
                return Err(Error::Domain(format!("initial density {rho} outside [0,1]")));
            }
            Ok(ParticleConfig::bernoulli(t, *rho, rng))
        }
        InitialCondition::Profile(profile) => {
            if profile.len() != t.sites() || profile.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::Domain("initial profile needs one density in [0,1] per site".into()));
            }
            Ok(ParticleConfig::bernoulli_profile(t, rng, |x| profile[x]))
        }
        InitialCondition::Fixed(bits) => ParticleConfig::from_bits(t, bits),
    }
}

/// Samples of one replica.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleStream {
    pub replica: u64,
    pub times: Vec<f64>,
    pub density: Vec<f64>,
    pub modes: Option<ModeSeries>,
    pub box_radius: Option<usize>,
    /// Pattern histograms, one per block of consecutive samples.
    pub box_counts: Option<Vec<Vec<u64>>>,
    #[serde(skip)]
    pub configs: Vec<ParticleConfig>,
    pub events: EventCounts,
}

impl SampleStream {
    /// One row per sample: time, density, then `re,im` of every recorded mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replica,time,density");
        if let Some(m) = &self.modes {
            for k in &m.modes {
                let tag: Vec<String> = k.iter().map(|c| c.to_string()).collect();
                out.push_str(&format!(",re_{0},im_{0}", tag.join("_")));
            }
        }
        out.push('\n');
        for (s, (t, rho)) in self.times.iter().zip(&self.density).enumerate() {
            out.push_str(&format!("{},{:.6},{:.10}", self.replica, t, rho));
            if let Some(m) = &self.modes {
                let w = m.modes.len();
                for c in &m.values[s * w..(s + 1) * w] {
                    out.push_str(&format!(",{:.10e},{:.10e}", c.re, c.im));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs one replica and records the configured observables at each sample time.
pub fn run_replica(cfg: &SimConfig, replica: u64) -> Result<SampleStream> {
    let mut engine = Engine::from_config(cfg, replica)?;
    let t = *engine.config().torus();
    let rho = cfg.params.rho_star();
    let evaluator = match cfg.observables.mode_cutoff {
        Some(k) => Some(ModeEvaluator::new(t, rho, k)?),
        None => None,
    };
    let boxes = match cfg.observables.box_radius {
        Some(r) => {
            let region = BoxRegion::new(r, t.dim());
            if region.len() > 24 {
                return Err(Error::Size(format!("box of {} sites is too large to tabulate", region.len())));
            }
            let sites: Vec<Vec<usize>> = (0..t.sites()).map(|x| region.sites(&t, x)).collect::<Result<_>>()?;
            Some((sites, Vec::<Vec<u64>>::new(), 1usize << region.len()))
        }
        None => None,
    };
    let times = cfg.sample_times();
    let mut stream = SampleStream {
        replica,
        modes: evaluator.as_ref().map(|e| ModeSeries { modes: e.modes().to_vec(), values: Vec::new() }),
        box_radius: cfg.observables.box_radius,
        ..Default::default()
    };
    let mut boxes = boxes;
    let block = cfg.observables.box_block.max(1);
    let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); evaluator.as_ref().map_or(0, |e| e.modes().len())];
    for &time in &times {
        engine.advance_to(time);
        let eta = engine.config();
        stream.times.push(time);
        stream.density.push(eta.density());
        if let (Some(ev), Some(series)) = (&evaluator, stream.modes.as_mut()) {
            ev.evaluate_into(eta, &mut buf);
            series.values.extend_from_slice(&buf);
        }
        if let Some((sites, blocks, patterns)) = boxes.as_mut() {
            if (stream.times.len() - 1) % block == 0 {
                blocks.push(vec![0u64; *patterns]);
            }
            let counts = blocks.last_mut().expect("block opened above");
            for s in sites.iter() {
                let idx = s.iter().enumerate().fold(0usize, |acc, (j, &y)| acc | ((eta.bit(y) as usize) << j));
                counts[idx] += 1;
            }
        }
        if cfg.observables.keep_configs {
            stream.configs.push(eta.clone());
        }
    }
    stream.box_counts = boxes.map(|(_, c, _)| c);
    stream.events = engine.counts();
    Ok(stream)
}

/// Runs every replica in parallel; the result does not depend on the thread count.
pub fn run(cfg: &SimConfig) -> Result<Vec<SampleStream>> {
    cfg.validate()?;
    (0..cfg.replicas as u64).into_par_iter().map(|r| run_replica(cfg, r)).collect()
}
