//! Fluctuation fields, lattice Fourier modes, Sobolev norms, local observables,
//! block kernels and the stationary spectrum estimator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, ParticleConfig, Torus};
use crate::stats::{auto_batch_means, BatchEstimate};
use crate::theory::ModelParams;

/// `X^n(eta, f) = n^{-d/2} sum_x (eta_x - rho) f(x/n)`, with `f` given per linear site.
pub fn fluctuation_field(eta: &ParticleConfig, f: &[f64], rho: f64) -> Result<f64> {
    let t = eta.torus();
    check_len(t, f.len())?;
    let sum: f64 = f.iter().enumerate().map(|(x, fx)| (eta.bit(x) as f64 - rho) * fx).sum();
    Ok(sum / (t.sites() as f64).sqrt())
}

fn check_len(t: &Torus, len: usize) -> Result<()> {
    if len != t.sites() {
        return Err(Error::Domain(format!("test function has {len} values, torus has {} sites", t.sites())));
    }
    Ok(())
}

/// Samples `f(x/n)` at every linear site.
pub fn sample_test_function(t: &Torus, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let n = t.n() as f64;
    let mut u = [0.0; 3];
    (0..t.sites())
        .map(|x| {
            for (axis, ui) in u.iter_mut().enumerate().take(t.dim()) {
                *ui = t.coord(x, axis) as f64 / n;
            }
            f(&u[..t.dim()])
        })
        .collect()
}

/// Fourier coefficients `X^n(k)` on a set of wave vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationField {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub modes: Vec<Vec<i64>>,
    pub coef: Vec<Complex64>,
    /// Number of wave vectors each stored mode stands for (2 for a `+-k` pair).
    pub multiplicity: Vec<u8>,
    /// True when the stored modes cover every residue class mod `n`.
    pub full: bool,
}

impl FluctuationField {
    /// Coefficient at any integer `k`, using periodicity and Hermitian symmetry.
    pub fn coefficient(&self, k: &[i64]) -> Option<Complex64> {
        let reduce = |k: &[i64]| -> Vec<i64> {
            k.iter()
                .map(|&c| {
                    let r = c.rem_euclid(self.n as i64);
                    if 2 * r > self.n as i64 {
                        r - self.n as i64
                    } else {
                        r
                    }
                })
                .collect()
        };
        let kr = reduce(k);
        let neg: Vec<i64> = reduce(&k.iter().map(|c| -c).collect::<Vec<_>>());
        for (m, c) in self.modes.iter().zip(&self.coef) {
            if reduce(m) == kr {
                return Some(*c);
            }
            if reduce(m) == neg {
                return Some(c.conj());
            }
        }
        None
    }
}

/// The half set of `{|k|_inf <= K}`: zero plus one representative of each `+-k`
/// pair (first nonzero component positive), ordered by `|k|^2`.
pub fn half_modes(d: usize, cutoff: usize) -> Vec<Vec<i64>> {
    let k = cutoff as i64;
    let side = 2 * cutoff + 1;
    let mut out: Vec<Vec<i64>> = (0..side.pow(d as u32))
        .map(|mut i| {
            (0..d)
                .map(|_| {
                    let c = (i % side) as i64 - k;
                    i /= side;
                    c
                })
                .collect::<Vec<i64>>()
        })
        .filter(|v| v.iter().find(|&&c| c != 0).is_none_or(|&c| c > 0))
        .collect();
    out.sort_by_key(|v| (v.iter().map(|c| c * c).sum::<i64>(), v.iter().rev().cloned().collect::<Vec<_>>()));
    out
}

/// Evaluates a fixed set of modes by direct summation over occupied sites.
#[derive(Clone, Debug)]
pub struct ModeEvaluator {
    torus: Torus,
    rho: f64,
    modes: Vec<Vec<i64>>,
    twiddle: Vec<Complex64>,
    norm: f64,
}

impl ModeEvaluator {
    /// Modes of the half set with cutoff `K`; requires `K < n/2`.
    pub fn new(torus: Torus, rho: f64, cutoff: usize) -> Result<Self> {
        if 2 * cutoff >= torus.n() {
            return Err(Error::Cutoff { cutoff, n: torus.n() });
        }
        Ok(Self::with_modes(torus, rho, half_modes(torus.dim(), cutoff)))
    }

    pub fn with_modes(torus: Torus, rho: f64, modes: Vec<Vec<i64>>) -> Self {
        let n = torus.n();
        let twiddle = (0..n).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect();
        Self { torus, rho, modes, twiddle, norm: (torus.sites() as f64).sqrt().recip() }
    }

    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    pub fn evaluate_into(&self, eta: &ParticleConfig, out: &mut [Complex64]) {
        let n = self.torus.n() as i64;
        let d = self.torus.dim();
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let mut coords = [0i64; 3];
        for x in eta.occupied() {
            for (axis, c) in coords.iter_mut().enumerate().take(d) {
                *c = self.torus.coord(x, axis) as i64;
            }
            for (m, o) in self.modes.iter().zip(out.iter_mut()) {
                let phase: i64 = m.iter().zip(&coords).map(|(k, c)| k * c).sum();
                *o += self.twiddle[phase.rem_euclid(n) as usize];
            }
        }
        // the rho-part only survives at k = 0 mod n
        let sites = self.torus.sites() as f64;
        for (m, o) in self.modes.iter().zip(out.iter_mut()) {
            if m.iter().all(|k| k.rem_euclid(n) == 0) {
                *o -= self.rho * sites;
            }
            *o *= self.norm;
        }
    }

    pub fn evaluate(&self, eta: &ParticleConfig) -> FluctuationField {
        let mut coef = vec![Complex64::new(0.0, 0.0); self.modes.len()];
        self.evaluate_into(eta, &mut coef);
        let multiplicity = self.modes.iter().map(|m| if m.iter().all(|&c| c == 0) { 1 } else { 2 }).collect();
        FluctuationField {
            n: self.torus.n(),
            d: self.torus.dim(),
            rho: self.rho,
            modes: self.modes.clone(),
            coef,
            multiplicity,
            full: false,
        }
    }
}

/// `X^n(k) = n^{-d/2} sum_x (eta_x - rho) e^{-2 pi i k.x/n}` on the half set `|k|_inf <= K`.
pub fn fourier_modes(eta: &ParticleConfig, rho: f64, cutoff: usize) -> Result<FluctuationField> {
    Ok(ModeEvaluator::new(*eta.torus(), rho, cutoff)?.evaluate(eta))
}

/// Every mode `k in {0..n-1}^d` by a separable FFT, reported with symmetric
/// representatives `k_i in (-n/2, n/2]`.
pub fn full_fourier_modes(eta: &ParticleConfig, rho: f64) -> FluctuationField {
    let t = eta.torus();
    let (n, d, sites) = (t.n(), t.dim(), t.sites());
    let mut data: Vec<Complex64> = (0..sites).map(|x| Complex64::new(eta.bit(x) as f64 - rho, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = t.stride(axis);
        for start in 0..sites {
            if t.coord(start, axis) != 0 {
                continue;
            }
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[start + j * stride];
            }
            fft.process(&mut line);
            for (j, l) in line.iter().enumerate() {
                data[start + j * stride] = *l;
            }
        }
    }
    let norm = (sites as f64).sqrt().recip();
    let modes = (0..sites)
        .map(|x| {
            (0..d)
                .map(|axis| {
                    let c = t.coord(x, axis) as i64;
                    if 2 * c > n as i64 {
                        c - n as i64
                    } else {
                        c
                    }
                })
                .collect()
        })
        .collect();
    FluctuationField {
        n,
        d,
        rho,
        modes,
        coef: data.into_iter().map(|c| c * norm).collect(),
        multiplicity: vec![1; sites],
        full: true,
    }
}

/// `(sum |X(k)|^2 (1 + |k|^2)^m)^{1/2}` over the stored modes, each counted with
/// its multiplicity. On a truncated field this is the truncated norm.
pub fn sobolev_norm(field: &FluctuationField, m: f64) -> f64 {
    field
        .modes
        .iter()
        .zip(&field.coef)
        .zip(&field.multiplicity)
        .map(|((k, c), &mult)| {
            let k2: i64 = k.iter().map(|v| v * v).sum();
            mult as f64 * c.norm_sqr() * (1.0 + k2 as f64).powf(m)
        })
        .sum::<f64>()
        .sqrt()
}

/// A function of the configuration on `B_R`, as a lookup table over box patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalObservable {
    region: BoxRegion,
    table: Vec<f64>,
    mean: f64,
}

impl LocalObservable {
    /// `table[i]` is the value on the pattern with index `i` (bit `j` = `j`-th box offset).
    /// The Bernoulli(`rho`) mean is the exact weighted sum over all patterns.
    pub fn new(radius: usize, d: usize, table: Vec<f64>, rho: f64) -> Result<Self> {
        let region = BoxRegion::new(radius, d);
        let bits = region.len();
        if bits > 24 {
            return Err(Error::Size(format!("box of {bits} sites is too large for a lookup table")));
        }
        if table.len() != 1 << bits {
            return Err(Error::Domain(format!("table needs {} entries, got {}", 1usize << bits, table.len())));
        }
        let mean = table
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let ones = (i as u64).count_ones() as i32;
                v * rho.powi(ones) * (1.0 - rho).powi(bits as i32 - ones)
            })
            .sum();
        Ok(Self { region, table, mean })
    }

    pub fn from_fn(radius: usize, d: usize, rho: f64, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        let bits = BoxRegion::new(radius, d).len();
        if bits > 24 {
            return Err(Error::Size(format!("box of {bits} sites is too large for a lookup table")));
        }
        let table = (0..1usize << bits)
            .map(|i| {
                let p: Vec<u8> = (0..bits).map(|j| ((i >> j) & 1) as u8).collect();
                f(&p)
            })
            .collect();
        Self::new(radius, d, table, rho)
    }

    /// `psi(eta) = prod_{y in offsets} eta_y` on the smallest box containing the offsets.
    pub fn product(offsets: &[Vec<i64>], d: usize, rho: f64) -> Result<Self> {
        let radius = offsets.iter().flatten().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0);
        let region = BoxRegion::new(radius, d);
        let slots: Vec<usize> = offsets
            .iter()
            .map(|o| {
                region
                    .offsets()
                    .iter()
                    .position(|r| &r[..d] == o.as_slice())
                    .ok_or_else(|| Error::Domain(format!("offset {o:?} has wrong dimension")))
            })
            .collect::<Result<_>>()?;
        Self::from_fn(radius, d, rho, |p| slots.iter().map(|&s| p[s] as f64).product())
    }

    pub fn radius(&self) -> usize {
        self.region.radius()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn value(&self, pattern: usize) -> f64 {
        self.table[pattern]
    }

    /// `psi(tau_x eta)` for every site `x`.
    pub fn evaluate_all(&self, eta: &ParticleConfig) -> Result<Vec<f64>> {
        let t = eta.torus();
        (0..t.sites())
            .map(|x| {
                let sites = self.region.sites(t, x)?;
                let idx = sites.iter().enumerate().fold(0usize, |acc, (j, &s)| acc | ((eta.bit(s) as usize) << j));
                Ok(self.table[idx])
            })
            .collect()
    }
}

/// `Psi^n(f; eta) = n^{-d} sum_x (psi(tau_x eta) - <psi>) f(x/n)`.
pub fn observable_field(eta: &ParticleConfig, psi: &LocalObservable, f: &[f64]) -> Result<f64> {
    let t = eta.torus();
    check_len(t, f.len())?;
    let values = psi.evaluate_all(eta)?;
    let sum: f64 = values.iter().zip(f).map(|(v, fx)| (v - psi.mean) * fx).sum();
    Ok(sum / t.sites() as f64)
}

/// Block kernels `p^l` (uniform on `{0..l-1}^d`) and `q^l = p^l * p^l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockKernels {
    pub ell: usize,
    pub d: usize,
    /// One-dimensional factor of `q^l` on `{0, ..., 2l - 2}`; `q^l` is its `d`-fold product.
    pub q1: Vec<f64>,
}

impl BlockKernels {
    pub fn p(&self, y: &[usize]) -> f64 {
        if y.iter().all(|&c| c < self.ell) {
            (self.ell as f64).powi(-(self.d as i32))
        } else {
            0.0
        }
    }

    pub fn q(&self, y: &[usize]) -> f64 {
        y.iter().map(|&c| self.q1.get(c).copied().unwrap_or(0.0)).product()
    }

    /// `q^l` over `{0..2l-2}^d`, axis 0 fastest.
    pub fn q_table(&self) -> Vec<f64> {
        let side = self.q1.len();
        (0..side.pow(self.d as u32))
            .map(|mut i| {
                (0..self.d)
                    .map(|_| {
                        let v = self.q1[i % side];
                        i /= side;
                        v
                    })
                    .product()
            })
            .collect()
    }
}

/// `p^l` uniform on the cube `C_0^l` and its self-convolution; needs `2l - 1 < n`.
pub fn block_kernels(ell: usize, n: usize, d: usize) -> Result<BlockKernels> {
    if ell == 0 || 2 * ell - 1 >= n {
        return Err(Error::Size(format!("block size l = {ell} needs 1 <= l and 2l - 1 < n = {n}")));
    }
    let l2 = (ell * ell) as f64;
    let q1 = (0..2 * ell - 1).map(|j| (ell - (j as i64 - (ell as i64 - 1)).unsigned_abs() as usize) as f64 / l2).collect();
    Ok(BlockKernels { ell, d, q1 })
}

/// `sum_y q^l(y) (eta_{x+y} - rho)`.
pub fn block_average(eta: &ParticleConfig, x: usize, kernels: &BlockKernels, rho: f64) -> f64 {
    let t = eta.torus();
    let side = kernels.q1.len();
    let mut acc = 0.0;
    let mut off = [0i64; 3];
    for (i, w) in kernels.q_table().into_iter().enumerate() {
        let mut r = i;
        for o in off.iter_mut().take(t.dim()) {
            *o = (r % side) as i64;
            r /= side;
        }
        acc += w * (eta.bit(t.offset(x, &off[..t.dim()])) as f64 - rho);
    }
    acc
}

/// Block averages at every site, computed as separable one-dimensional convolutions.
pub fn block_average_all(values: &[f64], t: &Torus, kernels: &BlockKernels) -> Vec<f64> {
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..t.dim() {
        for (x, nx) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut y = x;
            for &w in &kernels.q1 {
                acc += w * cur[y];
                y = t.step(y, axis, 1);
            }
            *nx = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Mode time series of one replica: `values[s * modes + j]` is mode `j` at sample `s`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub modes: Vec<Vec<i64>>,
    pub values: Vec<Complex64>,
}

impl ModeSeries {
    pub fn samples(&self) -> usize {
        if self.modes.is_empty() {
            0
        } else {
            self.values.len() / self.modes.len()
        }
    }

    pub fn mode(&self, j: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.values.iter().skip(j).step_by(self.modes.len()).copied()
    }
}

/// One row of an empirical spectrum table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub k: Vec<i64>,
    pub variance: f64,
    pub standard_error: f64,
    pub tau: f64,
    pub batches: usize,
    pub theory: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub rows: Vec<SpectrumRow>,
    pub warnings: Vec<String>,
}

impl SpectrumEstimate {
    /// Fills in `lambda_k` and `z = (estimate - lambda_k) / SE`.
    pub fn with_theory(mut self, p: &ModelParams) -> Result<Self> {
        for row in &mut self.rows {
            let th = p.spectrum(&row.k)?.variance;
            row.theory = Some(th);
            row.z = Some((row.variance - th) / row.standard_error);
        }
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,norm2,variance,standard_error,tau,batches,lambda_k,z\n");
        for r in &self.rows {
            let ks: Vec<String> = r.k.iter().map(|c| c.to_string()).collect();
            let n2: i64 = r.k.iter().map(|c| c * c).sum();
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.10e},{:.10e},{:.4},{},{},{}\n",
                ks.join(" "),
                n2,
                r.variance,
                r.standard_error,
                r.tau,
                r.batches,
                opt(r.theory),
                opt(r.z)
            ));
        }
        out
    }
}

/// Per-mode `Var X^n(k) = E|X - E X|^2` over stationary samples of every replica,
/// with batch-means standard errors sized from the autocorrelation of `|X - m|^2`.
pub fn spectrum_estimate(replicas: &[&ModeSeries]) -> Result<SpectrumEstimate> {
    let first = replicas.first().ok_or_else(|| Error::Insufficient("no replicas".into()))?;
    let mut est = SpectrumEstimate::default();
    for (j, k) in first.modes.iter().enumerate() {
        let total: usize = replicas.iter().map(|r| r.samples()).sum();
        if total < 2 {
            return Err(Error::Insufficient("fewer than 2 samples".into()));
        }
        let mean = replicas.iter().flat_map(|r| r.mode(j)).sum::<Complex64>() / total as f64;
        let series: Vec<Vec<f64>> = replicas.iter().map(|r| r.mode(j).map(|c| (c - mean).norm_sqr()).collect()).collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let BatchEstimate { mean: variance, standard_error, tau, batches, warning, .. } = auto_batch_means(&refs)?;
        if let Some(w) = warning {
            est.warnings.push(format!("mode {k:?}: {w}"));
        }
        est.rows.push(SpectrumRow { k: k.clone(), variance, standard_error, tau, batches, theory: None, z: None });
    }
    Ok(est)
}
