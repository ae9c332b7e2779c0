//! The stationary Gaussian fluctuation field and the linear SPDE in Fourier
//! space, where every mode is an independent Ornstein-Uhlenbeck process.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::half_modes;
use crate::theory::ModelParams;

/// Mode coefficients on the half set of `{|k|_inf <= K}`; the coefficient at
/// `-k` is the conjugate of the one at `k`, and the zero mode is real.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFieldSample {
    pub d: usize,
    pub cutoff: usize,
    pub modes: Vec<Vec<i64>>,
    pub coef: Vec<Complex64>,
}

impl GaussianFieldSample {
    pub fn zero(d: usize, cutoff: usize) -> Self {
        let modes = half_modes(d, cutoff);
        let coef = vec![Complex64::new(0.0, 0.0); modes.len()];
        Self { d, cutoff, modes, coef }
    }

    /// Coefficient at any `k` of the cutoff box.
    pub fn coefficient(&self, k: &[i64]) -> Option<Complex64> {
        if let Some(j) = self.modes.iter().position(|m| m == k) {
            return Some(self.coef[j]);
        }
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        self.modes.iter().position(|m| *m == neg).map(|j| self.coef[j].conj())
    }

    /// `X(f) = sum_k fhat(k) X(k)` for a real trigonometric polynomial.
    pub fn evaluate(&self, f: &TrigPolynomial) -> f64 {
        f.modes
            .iter()
            .zip(&f.coef)
            .map(|(k, c)| {
                let x = self.coefficient(k).unwrap_or_default();
                if k.iter().all(|v| *v == 0) {
                    (c * x).re
                } else {
                    2.0 * (c * x).re
                }
            })
            .sum()
    }

    /// Real-space values of the truncated field on `{j / m}^d`. Modes beyond
    /// the cutoff are absent, so this is a band-limited picture of the field.
    pub fn real_space(&self, m: usize) -> Vec<f64> {
        (0..m.pow(self.d as u32))
            .map(|i| {
                let mut r = i;
                let x: Vec<f64> = (0..self.d)
                    .map(|_| {
                        let c = (r % m) as f64 / m as f64;
                        r /= m;
                        c
                    })
                    .collect();
                self.modes
                    .iter()
                    .zip(&self.coef)
                    .map(|(k, c)| {
                        let phase: f64 = k.iter().zip(&x).map(|(a, b)| *a as f64 * b).sum();
                        let term = (c * Complex64::from_polar(1.0, 2.0 * PI * phase)).re;
                        if k.iter().all(|v| *v == 0) {
                            term
                        } else {
                            2.0 * term
                        }
                    })
                    .sum()
            })
            .collect()
    }
}

/// A real trigonometric polynomial given by `fhat(k)` on half-set
/// representatives; `fhat(-k)` is the conjugate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub label: String,
    pub modes: Vec<Vec<i64>>,
    pub coef: Vec<Complex64>,
}

impl TrigPolynomial {
    /// `cos(2 pi k.x)`.
    pub fn cosine(k: &[i64]) -> Self {
        Self {
            label: format!("cos{k:?}"),
            modes: vec![k.to_vec()],
            coef: vec![Complex64::new(if k.iter().all(|v| *v == 0) { 1.0 } else { 0.5 }, 0.0)],
        }
    }

    pub fn constant(d: usize) -> Self {
        Self { label: "one".into(), modes: vec![vec![0; d]], coef: vec![Complex64::new(1.0, 0.0)] }
    }

    /// `E[X(f)^2] = sum over all k of |fhat(k)|^2 lambda_k`.
    pub fn variance(&self, p: &ModelParams) -> Result<f64> {
        let mut v = 0.0;
        for (k, c) in self.modes.iter().zip(&self.coef) {
            let lam = p.spectrum(k)?.variance;
            let pair = if k.iter().all(|x| *x == 0) { 1.0 } else { 2.0 };
            v += pair * c.norm_sqr() * lam;
        }
        Ok(v)
    }
}

/// Per-mode stationary variances and OU rates on the half set.
#[derive(Clone, Debug, PartialEq)]
struct ModeLaw {
    lambda: Vec<f64>,
    theta: Vec<f64>,
}

fn mode_law(p: &ModelParams, modes: &[Vec<i64>]) -> Result<ModeLaw> {
    let mut lambda = Vec::with_capacity(modes.len());
    let mut theta = Vec::with_capacity(modes.len());
    for k in modes {
        let norm2 = k.iter().map(|c| (c * c) as f64).sum::<f64>();
        let l = p.spectrum_norm2(norm2)?;
        if !(l > 0.0) {
            return Err(Error::Inconsistent(format!("mode variance {l} at k = {k:?} is not positive")));
        }
        lambda.push(l);
        theta.push(p.mode_rate(norm2));
    }
    Ok(ModeLaw { lambda, theta })
}

/// Complex Gaussian with `E|Z|^2 = var`; real for the zero mode.
fn gaussian<R: Rng + ?Sized>(k: &[i64], var: f64, rng: &mut R) -> Complex64 {
    let z1: f64 = rng.sample(StandardNormal);
    if k.iter().all(|v| *v == 0) {
        return Complex64::new(var.sqrt() * z1, 0.0);
    }
    let z2: f64 = rng.sample(StandardNormal);
    Complex64::new(z1, z2) * (0.5 * var).sqrt()
}

/// Independent draws `X(k) = sqrt(lambda_k) xi_k`, `xi_k = (zeta_1 + i zeta_2) / sqrt 2`.
pub fn sample_stationary<R: Rng + ?Sized>(p: &ModelParams, cutoff: usize, rng: &mut R) -> Result<GaussianFieldSample> {
    p.validate()?;
    let mut s = GaussianFieldSample::zero(p.d, cutoff);
    let law = mode_law(p, &s.modes)?;
    for (j, k) in s.modes.iter().enumerate() {
        s.coef[j] = gaussian(k, law.lambda[j], rng);
    }
    Ok(s)
}

/// Exact OU transition over `dt`: `X(k) <- e^{theta_k dt} X(k)` plus independent
/// noise of variance `lambda_k (1 - e^{2 theta_k dt})`.
pub fn evolve_ou<R: Rng + ?Sized>(
    state: &GaussianFieldSample,
    dt: f64,
    p: &ModelParams,
    rng: &mut R,
) -> Result<GaussianFieldSample> {
    let mut out = evolve_noiseless(state, dt, p)?;
    let law = mode_law(p, &state.modes)?;
    for (j, k) in state.modes.iter().enumerate() {
        let var = law.lambda[j] * -(2.0 * law.theta[j] * dt).exp_m1();
        out.coef[j] += gaussian(k, var, rng);
    }
    Ok(out)
}

/// The deterministic part `X(k) <- e^{theta_k dt} X(k)`.
pub fn evolve_noiseless(state: &GaussianFieldSample, dt: f64, p: &ModelParams) -> Result<GaussianFieldSample> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let mut out = state.clone();
    for (c, k) in out.coef.iter_mut().zip(&state.modes) {
        let norm2 = k.iter().map(|v| (v * v) as f64).sum::<f64>();
        *c *= (p.mode_rate(norm2) * dt).exp();
    }
    Ok(out)
}

/// Noise intensity of mode `k`: `sigma_k^2 = 8 pi^2 |k|^2 chi + G`.
pub fn noise_intensity(p: &ModelParams, norm2: f64) -> f64 {
    let s = p.stationary();
    8.0 * PI * PI * norm2 * s.chi + s.g
}

/// `sigma_k^2 / (-2 theta_k)`, the stationary variance of the OU mode.
pub fn ou_stationary_variance(p: &ModelParams, norm2: f64) -> f64 {
    noise_intensity(p, norm2) / (-2.0 * p.mode_rate(norm2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub label: String,
    pub k: Vec<i64>,
    pub empirical: f64,
    pub standard_error: f64,
    pub theory: f64,
    pub z: f64,
}

impl AuditRow {
    fn new(label: String, k: Vec<i64>, values: &[f64], theory: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        Self { label, k, empirical: mean, standard_error: se, theory, z: (mean - theory) / se }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z.abs() <= sigmas
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub samples: usize,
}

impl AuditReport {
    pub fn all_within(&self, sigmas: f64) -> bool {
        self.rows.iter().all(|r| r.within(sigmas))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,k,empirical,standard_error,theory,z\n");
        for r in &self.rows {
            let k: Vec<String> = r.k.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{},{},{:.12e},{:.6e},{:.12e},{:.4}\n",
                r.label,
                k.join(" "),
                r.empirical,
                r.standard_error,
                r.theory,
                r.z
            ));
        }
        out
    }
}

/// Empirical `E|X(k)|^2` of the stationary sampler against `lambda_k`.
pub fn mode_variance_check<R: Rng + ?Sized>(
    p: &ModelParams,
    cutoff: usize,
    samples: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let draws: Vec<GaussianFieldSample> =
        (0..samples).map(|_| sample_stationary(p, cutoff, rng)).collect::<Result<_>>()?;
    let modes = half_modes(p.d, cutoff);
    let law = mode_law(p, &modes)?;
    let rows = modes
        .iter()
        .enumerate()
        .map(|(j, k)| {
            let v: Vec<f64> = draws.iter().map(|s| s.coef[j].norm_sqr()).collect();
            AuditRow::new("mode".into(), k.clone(), &v, law.lambda[j])
        })
        .collect();
    Ok(AuditReport { rows, samples })
}

/// Empirical `E[X(f)^2]` against `sum |fhat(k)|^2 lambda_k` for each polynomial.
pub fn covariance_check<R: Rng + ?Sized>(
    p: &ModelParams,
    cutoff: usize,
    battery: &[TrigPolynomial],
    samples: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    for f in battery {
        if f.modes.iter().any(|k| k.len() != p.d || k.iter().any(|c| c.unsigned_abs() as usize > cutoff)) {
            return Err(Error::Cutoff { cutoff, n: p.n });
        }
    }
    let mut values = vec![Vec::with_capacity(samples); battery.len()];
    for _ in 0..samples {
        let s = sample_stationary(p, cutoff, rng)?;
        for (v, f) in values.iter_mut().zip(battery) {
            let x = s.evaluate(f);
            v.push(x * x);
        }
    }
    let rows = battery
        .iter()
        .zip(&values)
        .map(|(f, v)| Ok(AuditRow::new(f.label.clone(), Vec::new(), v, f.variance(p)?)))
        .collect::<Result<_>>()?;
    Ok(AuditReport { rows, samples })
}

/// Stationary autocovariance `E[Re X_s(k) conj X_0(k)]` at lag `s` against
/// `lambda_k e^{theta_k s}`, from independent stationary pairs.
pub fn lag_covariance_check<R: Rng + ?Sized>(
    p: &ModelParams,
    cutoff: usize,
    lags: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let modes = half_modes(p.d, cutoff);
    let law = mode_law(p, &modes)?;
    let mut rows = Vec::new();
    for &s in lags {
        let mut values = vec![Vec::with_capacity(samples); modes.len()];
        for _ in 0..samples {
            let x0 = sample_stationary(p, cutoff, rng)?;
            let xs = evolve_ou(&x0, s, p, rng)?;
            for (j, v) in values.iter_mut().enumerate() {
                v.push((xs.coef[j] * x0.coef[j].conj()).re);
            }
        }
        for (j, k) in modes.iter().enumerate() {
            let theory = law.lambda[j] * (law.theta[j] * s).exp();
            rows.push(AuditRow::new(format!("lag={s}"), k.clone(), &values[j], theory));
        }
    }
    Ok(AuditReport { rows, samples })
}
