//! Box marginals of the stationary state and their distance to the Bernoulli
//! product measure: plug-in total variation, bootstrap errors and the
//! plug-in bias floor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, ParticleConfig};
use crate::simulate::SampleStream;

/// Largest box, in sites, whose pattern histogram is estimated.
pub const MAX_BOX_SITES: usize = 12;

/// Pattern histograms on `B_R`, one per block of configurations. Pattern
/// index `sum_i eta(x + o_i) 2^i` with offsets in `BoxRegion` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxMarginal {
    pub radius: usize,
    pub d: usize,
    pub blocks: Vec<Vec<u64>>,
}

fn box_sites(radius: usize, d: usize) -> Result<usize> {
    let sites = (2 * radius + 1).pow(d as u32);
    if sites > MAX_BOX_SITES {
        return Err(Error::Size(format!("box of {sites} sites exceeds the {MAX_BOX_SITES}-site estimation guard")));
    }
    Ok(sites)
}

impl BoxMarginal {
    pub fn empty(radius: usize, d: usize) -> Result<Self> {
        box_sites(radius, d)?;
        Ok(Self { radius, d, blocks: Vec::new() })
    }

    pub fn sites(&self) -> usize {
        (2 * self.radius + 1).pow(self.d as u32)
    }

    pub fn patterns(&self) -> usize {
        1 << self.sites()
    }

    pub fn counts(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.patterns()];
        for b in &self.blocks {
            for (o, c) in out.iter_mut().zip(b) {
                *o += c;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.blocks.iter().flatten().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts().into_iter().map(|c| c as f64 / total).collect()
    }

    /// Appends the blocks of another marginal on the same box.
    pub fn merge(&mut self, other: &BoxMarginal) -> Result<()> {
        if other.radius != self.radius || other.d != self.d {
            return Err(Error::Inconsistent("merging marginals of different boxes".into()));
        }
        self.blocks.extend(other.blocks.iter().cloned());
        Ok(())
    }

    /// Merges runs of `len` consecutive blocks.
    pub fn rebin(&self, len: usize) -> Self {
        let len = len.max(1);
        let blocks = self
            .blocks
            .chunks(len)
            .map(|chunk| {
                let mut acc = vec![0u64; self.patterns()];
                for b in chunk {
                    for (a, c) in acc.iter_mut().zip(b) {
                        *a += c;
                    }
                }
                acc
            })
            .collect();
        Self { radius: self.radius, d: self.d, blocks }
    }

    /// Effective number of independent pattern draws, from the spread of the
    /// block frequencies: `sum p(1-p) / sum Var(p_hat)`. With fewer than two
    /// blocks the overlap of neighbouring boxes is discounted instead, as
    /// `total / |B_R|`.
    pub fn effective_samples(&self) -> f64 {
        let total = self.total() as f64;
        let fallback = total / self.sites() as f64;
        let b = self.blocks.len();
        if b < 2 {
            return fallback;
        }
        let p = self.probabilities();
        let weights: Vec<f64> = self.blocks.iter().map(|blk| blk.iter().sum::<u64>() as f64).collect();
        let mut var_sum = 0.0;
        for (j, pj) in p.iter().enumerate() {
            let s: f64 = self
                .blocks
                .iter()
                .zip(&weights)
                .map(|(blk, w)| {
                    let dev = blk[j] as f64 - pj * w;
                    dev * dev
                })
                .sum();
            var_sum += s / (total * total) * b as f64 / (b as f64 - 1.0);
        }
        let spread: f64 = p.iter().map(|x| x * (1.0 - x)).sum();
        if var_sum > 0.0 {
            spread / var_sum
        } else {
            fallback
        }
    }
}

/// Pools every centre of every configuration; each configuration is one block.
pub fn collect_marginal(configs: &[ParticleConfig], radius: usize) -> Result<BoxMarginal> {
    let mut m = BoxMarginal::empty(radius, configs.first().map_or(1, |c| c.torus().dim()))?;
    for eta in configs {
        m.blocks.push(histogram(eta, radius, None)?);
    }
    Ok(m)
}

/// The estimator that looks at a single centre only.
pub fn collect_marginal_at(configs: &[ParticleConfig], radius: usize, centre: usize) -> Result<BoxMarginal> {
    let mut m = BoxMarginal::empty(radius, configs.first().map_or(1, |c| c.torus().dim()))?;
    for eta in configs {
        m.blocks.push(histogram(eta, radius, Some(centre))?);
    }
    Ok(m)
}

fn histogram(eta: &ParticleConfig, radius: usize, centre: Option<usize>) -> Result<Vec<u64>> {
    let t = eta.torus();
    let k = box_sites(radius, t.dim())?;
    if t.n() <= 2 * radius + 1 {
        return Err(Error::BoxTooLarge { radius, n: t.n() });
    }
    let region = BoxRegion::new(radius, t.dim());
    let mut counts = vec![0u64; 1 << k];
    let centres: Vec<usize> = match centre {
        Some(c) => vec![c],
        None => (0..t.sites()).collect(),
    };
    for x in centres {
        let idx = region.sites(t, x)?.iter().enumerate().fold(0usize, |acc, (j, &y)| acc | ((eta.bit(y) as usize) << j));
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Collects the histograms recorded by the simulator, merging `block_len`
/// consecutive recorded blocks within each replica.
pub fn marginal_from_streams(streams: &[SampleStream], d: usize, block_len: usize) -> Result<BoxMarginal> {
    let radius = streams
        .first()
        .and_then(|s| s.box_radius)
        .ok_or_else(|| Error::Insufficient("streams carry no box histograms".into()))?;
    let mut m = BoxMarginal::empty(radius, d)?;
    for s in streams {
        let blocks = match (&s.box_counts, s.box_radius) {
            (Some(b), Some(r)) if r == radius => b,
            _ => return Err(Error::Inconsistent("streams record different boxes".into())),
        };
        let part = BoxMarginal { radius, d, blocks: blocks.clone() }.rebin(block_len);
        m.merge(&part)?;
    }
    Ok(m)
}

/// Bernoulli(rho) product probability of every pattern.
pub fn product_marginal(sites: usize, rho: f64) -> Vec<f64> {
    (0..1usize << sites)
        .map(|i| {
            let ones = i.count_ones() as i32;
            rho.powi(ones) * (1.0 - rho).powi(sites as i32 - ones)
        })
        .collect()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `sum p log(p / q)` over the support of `p`.
fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub tv: f64,
    /// Standard deviation of the bootstrap replicates.
    pub error: f64,
    /// `sum sqrt(p(1-p) / N_eff) / 2`, an upper bound on the plug-in bias.
    pub bias_floor: f64,
    pub effective_samples: f64,
    pub blocks: usize,
}

/// Plug-in TV to the product measure, with a bootstrap over whole blocks of
/// configurations (never over centres, which are spatially dependent).
pub fn tv_to_product<R: Rng + ?Sized>(m: &BoxMarginal, rho: f64, resamples: usize, rng: &mut R) -> Result<TvEstimate> {
    if m.total() == 0 {
        return Err(Error::Insufficient("empty marginal".into()));
    }
    let q = product_marginal(m.sites(), rho);
    let p = m.probabilities();
    let estimate = tv(&p, &q);
    let b = m.blocks.len();
    let mut reps = Vec::with_capacity(resamples);
    if b >= 2 {
        let mut acc = vec![0u64; m.patterns()];
        for _ in 0..resamples {
            acc.iter_mut().for_each(|a| *a = 0);
            for _ in 0..b {
                for (a, c) in acc.iter_mut().zip(&m.blocks[rng.random_range(0..b)]) {
                    *a += c;
                }
            }
            let total = acc.iter().sum::<u64>() as f64;
            let pr: Vec<f64> = acc.iter().map(|c| *c as f64 / total).collect();
            reps.push(tv(&pr, &q));
        }
    }
    let error = if reps.len() >= 2 {
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        (reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (reps.len() as f64 - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let n_eff = m.effective_samples();
    let bias_floor = 0.5 * p.iter().map(|x| (x * (1.0 - x) / n_eff).sqrt()).sum::<f64>();
    Ok(TvEstimate { tv: estimate, error, bias_floor, effective_samples: n_eff, blocks: b })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinskerAudit {
    pub tv: f64,
    pub kl: f64,
    pub pass: bool,
}

/// `2 TV^2 <= KL` for the plug-in estimates against the product measure.
pub fn pinsker_audit(m: &BoxMarginal, rho: f64) -> Result<PinskerAudit> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("product reference needs 0 < rho < 1, got {rho}")));
    }
    let q = product_marginal(m.sites(), rho);
    let p = m.probabilities();
    let (t, h) = (tv(&p, &q), kl(&p, &q));
    Ok(PinskerAudit { tv: t, kl: h, pass: 2.0 * t * t <= h + 1e-15 })
}
