//! The hydrodynamic equation `du/dt = Laplace u + F(u)` on the unit torus, the
//! linear semigroup `P_t` and the comparison with the particle system.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{block_average_all, block_kernels};
use crate::lattice::{ParticleConfig, Torus};
use crate::simulate::Engine;
use crate::theory::ModelParams;

/// Maximum-principle tolerance.
pub const RANGE_TOL: f64 = 1e-9;

/// Largest admissible `dt * Lip(F)` for the explicit reaction part.
pub const STABILITY_BOUND: f64 = 0.5;

/// Grid values on `{0, 1/m, ..}^d`, axis 0 fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub m: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(m: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 || !(1..=3).contains(&d) || values.len() != m.pow(d as u32) {
            return Err(Error::Size(format!("profile needs m^d values with m >= 2, 1 <= d <= 3 (m = {m}, d = {d})")));
        }
        let out = Self { m, d, values };
        out.check_range()?;
        Ok(out)
    }

    /// Samples `u(x)` at the grid points `x = j / m`.
    pub fn from_fn(m: usize, d: usize, u: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; d];
        let values = (0..m.pow(d as u32))
            .map(|i| {
                let mut r = i;
                for c in x.iter_mut() {
                    *c = (r % m) as f64 / m as f64;
                    r /= m;
                }
                u(&x)
            })
            .collect();
        Self::new(m, d, values)
    }

    pub fn constant(m: usize, d: usize, rho: f64) -> Result<Self> {
        Self::new(m, d, vec![rho; m.pow(d as u32)])
    }

    pub fn check_range(&self) -> Result<()> {
        match self.values.iter().find(|v| !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(*v)) {
            Some(v) => Err(Error::Domain(format!("profile value {v} left [0,1]"))),
            None => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `(m^{-d} sum (u - v)^2)^{1/2}`.
    pub fn l2_distance(&self, other: &[f64]) -> f64 {
        let s: f64 = self.values.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum();
        (s / self.values.len() as f64).sqrt()
    }

    /// Fourier coefficient `m^{-d} sum_x u(x) e^{-2 pi i k.x}`.
    pub fn mode(&self, k: &[i64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let mut r = i;
            let mut phase = 0.0;
            for kk in k {
                phase += *kk as f64 * (r % self.m) as f64 / self.m as f64;
                r /= self.m;
            }
            acc += Complex64::from_polar(*v, -2.0 * PI * phase);
        }
        acc / self.values.len() as f64
    }
}

/// Separable d-dimensional FFT on an `m^d` grid.
struct Spectral {
    m: usize,
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    /// `4 pi^2 |k|^2` per grid frequency.
    q: Vec<f64>,
}

impl Spectral {
    fn new(m: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        let q = (0..m.pow(d as u32))
            .map(|i| {
                let mut r = i;
                let mut s = 0.0;
                for _ in 0..d {
                    let c = (r % m) as i64;
                    let k = if 2 * c > m as i64 { c - m as i64 } else { c };
                    s += (k * k) as f64;
                    r /= m;
                }
                4.0 * PI * PI * s
            })
            .collect();
        Self {
            m,
            d,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            line: vec![Complex64::new(0.0, 0.0); m],
            q,
        }
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { self.inverse.clone() } else { self.forward.clone() };
        let m = self.m;
        for axis in 0..self.d {
            let stride = m.pow(axis as u32);
            for start in 0..data.len() {
                if (start / stride) % m != 0 {
                    continue;
                }
                for (j, l) in self.line.iter_mut().enumerate() {
                    *l = data[start + j * stride];
                }
                fft.process(&mut self.line);
                for (j, l) in self.line.iter().enumerate() {
                    data[start + j * stride] = *l;
                }
            }
        }
        if inverse {
            let scale = (data.len() as f64).recip();
            data.iter_mut().for_each(|c| *c *= scale);
        }
    }

    fn to_modes(&mut self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    fn to_grid(&mut self, mut modes: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut modes, true);
        modes.into_iter().map(|c| c.re).collect()
    }
}

/// Profiles recorded at the requested times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<DensityProfile>,
    pub steps: usize,
}

impl Trajectory {
    /// Long format: `t,site,u`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,site,u\n");
        for (t, prof) in self.times.iter().zip(&self.profiles) {
            for (x, v) in prof.values.iter().enumerate() {
                out.push_str(&format!("{t},{x},{v:.15e}\n"));
            }
        }
        out
    }
}

/// Integrates the hydrodynamic equation with a second-order IMEX scheme: the
/// Laplacian implicitly in Fourier space and `F` by extrapolation (SBDF2),
/// started with one IMEX Euler step. `times` must be increasing; each interval
/// is cut into equal steps no longer than `dt`.
pub fn solve_hydro(u0: &DensityProfile, times: &[f64], p: &ModelParams, dt: f64) -> Result<Trajectory> {
    p.validate()?;
    u0.check_range()?;
    if !(dt > 0.0) || dt * p.f_lipschitz() > STABILITY_BOUND {
        return Err(Error::Stability(format!(
            "dt = {dt} violates dt * Lip(F) <= {STABILITY_BOUND} (Lip(F) = {})",
            p.f_lipschitz()
        )));
    }
    if times.iter().any(|t| *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("recording times must be non-negative and increasing".into()));
    }
    let mut spec = Spectral::new(u0.m, u0.d);
    let reaction = |u: &[f64]| -> Vec<f64> { u.iter().map(|v| p.f_unchecked(*v)).collect() };
    let mut u = u0.values.clone();
    let mut hat = spec.to_modes(&u);
    let mut f_hat = spec.to_modes(&reaction(&u));
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut now = 0.0;
    let mut last_h = f64::NAN;
    let mut steps = 0;
    let mut out = Trajectory { times: Vec::new(), profiles: Vec::new(), steps: 0 };
    for &target in times {
        let span = target - now;
        let count = if span > 0.0 { (span / dt).ceil() as usize } else { 0 };
        let h = if count > 0 { span / count as f64 } else { 0.0 };
        if count > 0 && h != last_h {
            // a changed step length restarts the multistep scheme
            prev = None;
            last_h = h;
        }
        for _ in 0..count {
            let next: Vec<Complex64> = match &prev {
                Some((hp, fp)) => hat
                    .iter()
                    .zip(hp)
                    .zip(f_hat.iter().zip(fp))
                    .zip(&spec.q)
                    .map(|(((un, um), (fn_, fm)), q)| {
                        (4.0 * un - um + 2.0 * h * (2.0 * fn_ - fm)) / (3.0 + 2.0 * h * q)
                    })
                    .collect(),
                _ => hat.iter().zip(&f_hat).zip(&spec.q).map(|((un, fn_), q)| (un + h * fn_) / (1.0 + h * q)).collect(),
            };
            u = spec.to_grid(next.clone());
            prev = Some((std::mem::replace(&mut hat, next), std::mem::replace(&mut f_hat, spec.to_modes(&reaction(&u)))));
            steps += 1;
        }
        now = target;
        let prof = DensityProfile { m: u0.m, d: u0.d, values: u.clone() };
        prof.check_range().map_err(|e| Error::Stability(format!("maximum principle violated at t = {target}: {e}")))?;
        out.times.push(target);
        out.profiles.push(prof);
    }
    out.steps = steps;
    Ok(out)
}

/// Classical RK4 for the scalar ODE `u' = F(u)`; the oracle for constant profiles.
pub fn reaction_ode(u0: f64, t: f64, p: &ModelParams, steps: usize) -> f64 {
    let h = t / steps as f64;
    let f = |u: f64| p.f_unchecked(u);
    let mut u = u0;
    for _ in 0..steps {
        let k1 = f(u);
        let k2 = f(u + 0.5 * h * k1);
        let k3 = f(u + 0.5 * h * k2);
        let k4 = f(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error: f64,
    pub order: Option<f64>,
}

/// Temporal refinement study: L2 errors at time `t` against a run with
/// `dt_min / 8`, and the observed orders between successive step sizes.
pub fn convergence_study(u0: &DensityProfile, t: f64, p: &ModelParams, dts: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min) / 8.0;
    let reference = solve_hydro(u0, &[t], p, finest)?.profiles.remove(0);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &dt in dts {
        let sol = solve_hydro(u0, &[t], p, dt)?.profiles.remove(0);
        let error = sol.l2_distance(&reference.values);
        let order = rows.last().map(|r| (r.error / error).ln() / (r.dt / dt).ln());
        rows.push(ConvergenceRow { dt, error, order });
    }
    Ok(rows)
}

/// Exact Fourier multiplier `e^{(-4 pi^2 |k|^2 + F'(rho*)) t}` applied to modes.
pub fn semigroup_apply(modes: &[Vec<i64>], coef: &[Complex64], t: f64, p: &ModelParams) -> Result<Vec<Complex64>> {
    if t < 0.0 {
        return Err(Error::Domain(format!("semigroup time {t} < 0")));
    }
    let fp = p.stationary().f_prime;
    Ok(modes
        .iter()
        .zip(coef)
        .map(|(k, c)| {
            let norm2: i64 = k.iter().map(|v| v * v).sum();
            c * (-4.0 * PI * PI * norm2 as f64 * t + fp * t).exp()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralIdentity {
    /// `int_0^inf |grad P_t f|^2 dt` by quadrature.
    pub gradient_integral: f64,
    /// `|f|^2 / 2 + F'(rho*) int_0^inf |P_t f|^2 dt`, the integral by quadrature.
    pub right_side: f64,
    pub residual: f64,
}

/// Five-point Gauss-Legendre rule on `[-1, 1]`.
const GL_NODES: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] =
    [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];

/// `int_0^inf g(t) dt` for an integrand that decays at least like `e^{-rate t}`,
/// on geometrically graded panels with five-point Gauss-Legendre.
fn integrate_decaying(g: impl Fn(f64) -> f64, fastest: f64, slowest: f64) -> f64 {
    let mut a = 0.0;
    let mut h = 0.02 / fastest;
    let end = 45.0 / slowest;
    let mut acc = 0.0;
    while a < end {
        let b = a + h;
        let (mid, half) = (0.5 * (a + b), 0.5 * h);
        acc += half * GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, w)| w * g(mid + half * x)).sum::<f64>();
        a = b;
        h *= 1.15;
    }
    acc
}

/// Checks `int |grad P_t f|^2 = |f|^2 / 2 + F'(rho*) int |P_t f|^2` for a
/// trigonometric polynomial given by its modes over the whole of `Z^d`.
pub fn integral_identity_check(modes: &[Vec<i64>], coef: &[Complex64], p: &ModelParams) -> Result<IntegralIdentity> {
    let fp = p.stationary().f_prime;
    let rates: Vec<(f64, f64)> = modes
        .iter()
        .zip(coef)
        .map(|(k, c)| (4.0 * PI * PI * k.iter().map(|v| (v * v) as f64).sum::<f64>(), c.norm_sqr()))
        .collect();
    let norm2: f64 = rates.iter().map(|r| r.1).sum();
    let fastest = 2.0 * rates.iter().map(|r| r.0).fold(0.0, f64::max) - 2.0 * fp;
    let slowest = -2.0 * fp;
    let grad = integrate_decaying(|t| rates.iter().map(|(q, w)| q * w * (2.0 * (fp - q) * t).exp()).sum(), fastest, slowest);
    let mass = integrate_decaying(|t| rates.iter().map(|(q, w)| w * (2.0 * (fp - q) * t).exp()).sum(), fastest, slowest);
    let right = 0.5 * norm2 + fp * mass;
    Ok(IntegralIdentity { gradient_integral: grad, right_side: right, residual: (grad - right).abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroRow {
    pub n: usize,
    pub t: f64,
    pub ell: usize,
    pub l2_error: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroReport {
    pub rows: Vec<HydroRow>,
}

impl HydroReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,t,ell,l2_error,replicas\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.12e},{}\n", r.n, r.t, r.ell, r.l2_error, r.replicas));
        }
        out
    }

    pub fn error(&self, n: usize, t: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n && r.t == t).map(|r| r.l2_error)
    }
}

/// Runs `replicas` particle systems from the product measure with profile
/// `u0(x / n)` and compares the replica-averaged `q^l` block density with the
/// same kernel applied to the PDE solution on the lattice grid, `l = n / 8`.
/// Errors are discrete L2 distances over all sites.
pub fn hydro_vs_particles(
    u0: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: &ModelParams,
    replicas: usize,
    times: &[f64],
    seed: u64,
) -> Result<HydroReport> {
    let n = p.n;
    let torus = Torus::new(n, p.d)?;
    let ell = (n / 8).max(1);
    let kernels = block_kernels(ell, n, p.d)?;
    let profile = DensityProfile::from_fn(n, p.d, u0)?;
    let pde = solve_hydro(&profile, times, p, 1e-4_f64.min(STABILITY_BOUND / p.f_lipschitz()))?;
    let per_replica: Vec<Vec<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r + (1 << 32));
            let eta = ParticleConfig::bernoulli_profile(torus, &mut rng, |x| profile.values[x]);
            let mut engine = Engine::new(*p, eta, seed, r)?;
            let mut snaps = Vec::new();
            for &t in times {
                engine.advance_to(t);
                let occ: Vec<f64> = (0..n.pow(p.d as u32)).map(|x| engine.config().bit(x) as f64).collect();
                snaps.push(block_average_all(&occ, &torus, &kernels));
            }
            Ok(snaps)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let sites = torus.sites();
        let mut mean = vec![0.0; sites];
        for rep in &per_replica {
            for (m, v) in mean.iter_mut().zip(&rep[i]) {
                *m += v / replicas as f64;
            }
        }
        let target = block_average_all(&pde.profiles[i].values, &torus, &kernels);
        let err = (mean.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / sites as f64).sqrt();
        rows.push(HydroRow { n, t, ell, l2_error: err, replicas });
    }
    Ok(HydroReport { rows })
}
