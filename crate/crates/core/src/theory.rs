//! Closed-form scalar functions of the model: the effective reaction `F`, its
//! companion `G`, the stable density `rho*`, the log-Sobolev constant `kappa`,
//! the Green's-function scale `g_d`, the limiting fluctuation spectrum and the
//! Gaussian relative-entropy functional. Also the two concentration lemmas
//! (Hoeffding and sub-Gaussian tails) as Monte Carlo predicates.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance between the two algebraic forms of the spectrum.
pub const SPECTRUM_AGREEMENT: f64 = 1e-12;

/// `|1 - 2 rho|` below which `kappa` switches to its limit `1/eps0`.
const KAPPA_SWITCH: f64 = 1e-8;

/// Parameters `(a, b, lambda, d, n)` of the reaction-diffusion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub d: usize,
    pub n: usize,
}

impl ModelParams {
    /// Validates `a, b > 0`, `lambda > -a`, `d in {1,2,3}` and `n >= 2`.
    ///
    /// `n = 2` is admitted with the parallel-edge convention of
    /// [`crate::lattice`]; it is only used by the exact solver.
    pub fn new(a: f64, b: f64, lambda: f64, d: usize, n: usize) -> Result<Self> {
        let p = Self { a, b, lambda, d, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Params(format!("a must be > 0, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Params(format!("b must be > 0, got {}", self.b)));
        }
        if !(self.lambda.is_finite() && self.lambda > -self.a) {
            return Err(Error::Params(format!(
                "lambda must exceed -a = {}, got {}",
                -self.a, self.lambda
            )));
        }
        if !(1..=3).contains(&self.d) {
            return Err(Error::Params(format!("d must be 1, 2 or 3, got {}", self.d)));
        }
        if self.n < 2 {
            return Err(Error::Params(format!("n must be >= 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn with_size(self, n: usize, d: usize) -> Result<Self> {
        Self::new(self.a, self.b, self.lambda, d, n)
    }

    /// `eps0 = min{a, a + lambda, b}`, the uniform lower bound on the rates.
    pub fn eps0(&self) -> f64 {
        self.a.min(self.a + self.lambda).min(self.b)
    }

    /// `c_max = max{a + max(lambda, 0), b}`, the uniform upper bound on the rates.
    pub fn c_max(&self) -> f64 {
        (self.a + self.lambda.max(0.0)).max(self.b)
    }

    pub fn f(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.f_unchecked(rho))
    }

    pub fn g(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok((self.a + self.lambda * rho) * (1.0 - rho) + self.b * rho)
    }

    pub(crate) fn f_unchecked(&self, rho: f64) -> f64 {
        (self.a + self.lambda * rho) * (1.0 - rho) - self.b * rho
    }

    /// `F'(rho) = lambda - a - b - 2 lambda rho`.
    pub fn f_prime(&self, rho: f64) -> f64 {
        self.lambda - self.a - self.b - 2.0 * self.lambda * rho
    }

    /// `max |F'|` over `[0, 1]`; `F'` is affine so the endpoints suffice.
    pub fn f_lipschitz(&self) -> f64 {
        self.f_prime(0.0).abs().max(self.f_prime(1.0).abs())
    }

    /// The unique zero of `F` in `(0, 1)` by bisection to machine precision.
    pub fn rho_star(&self) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.f_unchecked(mid);
            if v == 0.0 {
                return mid;
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (self.f_unchecked(lo).abs(), self.f_unchecked(hi).abs());
        if flo <= fhi {
            lo
        } else {
            hi
        }
    }

    /// Constants evaluated at `rho*`.
    pub fn stationary(&self) -> Stationary {
        let rho = self.rho_star();
        let chi = chi(rho);
        Stationary {
            rho,
            chi,
            f_prime: self.f_prime(rho),
            g: (self.a + self.lambda * rho) * (1.0 - rho) + self.b * rho,
            lambda: self.lambda,
        }
    }

    /// Default burn-in `10 / |F'(rho*)|` model-time units.
    pub fn default_burn_in(&self) -> f64 {
        10.0 / self.stationary().f_prime.abs()
    }

    /// The log-Sobolev constant `kappa(rho)`; equals `1/eps0` at `rho = 1/2`.
    pub fn kappa(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!("kappa needs rho in (0,1), got {rho}")));
        }
        let eps0 = self.eps0();
        let gap = (1.0 - 2.0 * rho).abs();
        if gap < KAPPA_SWITCH {
            return Ok(1.0 / eps0);
        }
        Ok(2.0 * rho * (1.0 - rho) * (rho / (1.0 - rho)).ln().abs() / (eps0 * gap))
    }

    /// `(A, B)` with `A = (a + lambda rho)(1 - rho)` and `B = b rho`.
    pub fn mft_rates(&self, rho: f64) -> Result<(f64, f64)> {
        check_density(rho)?;
        Ok(((self.a + self.lambda * rho) * (1.0 - rho), self.b * rho))
    }

    /// Limiting variance `lambda_k` of the `k`-th Fourier mode.
    pub fn spectrum(&self, k: &[i64]) -> Result<SpectrumPrediction> {
        let norm2: f64 = k.iter().map(|&c| (c * c) as f64).sum();
        let variance = self.spectrum_norm2(norm2)?;
        Ok(SpectrumPrediction { k: k.to_vec(), variance })
    }

    /// `lambda_k` as a function of `|k|^2`, evaluated by both algebraic forms.
    pub fn spectrum_norm2(&self, norm2: f64) -> Result<f64> {
        let s = self.stationary();
        let (white, split) = spectrum_forms(&s, norm2);
        let scale = white.abs().max(split.abs()).max(f64::MIN_POSITIVE);
        if (white - split).abs() > SPECTRUM_AGREEMENT * scale {
            return Err(Error::Inconsistent(format!(
                "spectrum forms disagree at |k|^2 = {norm2}: {white} vs {split}"
            )));
        }
        Ok(white)
    }

    /// Rate of the `k`-th mode of the linearised dynamics, `-4 pi^2 |k|^2 + F'(rho*)`.
    pub fn mode_rate(&self, norm2: f64) -> f64 {
        -4.0 * PI * PI * norm2 + self.stationary().f_prime
    }

    /// Smallness diagnostic `C kappa(rho*) A(|lambda| / (d rho*)) < 1/2`,
    /// `A(u) = u(1+u)`. The constant is not known, so this is never a gate.
    pub fn smallness_diagnostic(&self, constant: f64) -> Result<SmallnessDiagnostic> {
        let s = self.stationary();
        let u = self.lambda.abs() / (self.d as f64 * s.rho);
        let value = constant * self.kappa(s.rho)? * u * (1.0 + u);
        Ok(SmallnessDiagnostic { constant, value, satisfied: value < 0.5 })
    }
}

/// Values at the stable zero `rho*` of `F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub rho: f64,
    pub chi: f64,
    pub f_prime: f64,
    pub g: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPrediction {
    pub k: Vec<i64>,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessDiagnostic {
    pub constant: f64,
    pub value: f64,
    pub satisfied: bool,
}

/// The white-noise-plus-correction form and the gradient/reaction split form.
pub fn spectrum_forms(s: &Stationary, norm2: f64) -> (f64, f64) {
    let q = 4.0 * PI * PI * norm2;
    // G + 2F'chi reduces to 2 lambda chi (1 - rho) once F(rho) = 0, which makes
    // the correction vanish identically without interaction.
    let white = s.chi + s.lambda * s.chi * (1.0 - s.rho) / (q - s.f_prime);
    let split = q * s.chi / (q - s.f_prime) + s.g / (2.0 * q - 2.0 * s.f_prime);
    (white, split)
}

fn check_density(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain(format!("density must lie in [0,1], got {rho}")))
    }
}

/// Mobility `chi(rho) = rho (1 - rho)`.
pub fn chi(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

/// `g_d(n)`: `n`, `log n` or `1` for `d = 1`, `2`, `>= 3`.
pub fn g_d(n: usize, d: usize) -> f64 {
    match d {
        1 => n as f64,
        2 => (n as f64).ln(),
        _ => 1.0,
    }
}

/// `Xi(r) = (r - log r - 1) / 2`, the relative entropy of `N(0, r)` w.r.t. `N(0, 1)`.
pub fn xi(r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("Xi needs r > 0, got {r}")));
    }
    Ok(xi_excess(r - 1.0))
}

/// `Xi(1 + e)` evaluated without cancellation for small `e`.
fn xi_excess(e: f64) -> f64 {
    0.5 * (e - e.ln_1p())
}

/// Partial sum of `Xi(lambda_k / chi)` over `|k|_inf <= cutoff` in `Z^d`.
pub fn gaussian_entropy_sum(p: &ModelParams, cutoff: usize) -> f64 {
    let s = p.stationary();
    let excess = |norm2: f64| {
        let q = 4.0 * PI * PI * norm2;
        (s.g + 2.0 * s.f_prime * s.chi) / (s.chi * (2.0 * q - 2.0 * s.f_prime))
    };
    let k = cutoff as i64;
    // Multiplicity of each |k|^2 over the cube, then one evaluation per shell.
    let max2 = (p.d as i64) * k * k;
    let mut count = vec![0u64; max2 as usize + 1];
    let side: Vec<i64> = (-k..=k).collect();
    match p.d {
        1 => side.iter().for_each(|&a| count[(a * a) as usize] += 1),
        2 => {
            for &a in &side {
                for &b in &side {
                    count[(a * a + b * b) as usize] += 1;
                }
            }
        }
        _ => {
            for &a in &side {
                for &b in &side {
                    for &c in &side {
                        count[(a * a + b * b + c * c) as usize] += 1;
                    }
                }
            }
        }
    }
    count
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(n2, &c)| c as f64 * xi_excess(excess(n2 as f64)))
        .sum()
}

/// A bounded random variable with a closed-form mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundedDist {
    Constant(f64),
    Bernoulli(f64),
    Uniform { lo: f64, hi: f64 },
}

impl BoundedDist {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            BoundedDist::Constant(c) => (c, c),
            BoundedDist::Bernoulli(_) => (0.0, 1.0),
            BoundedDist::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            BoundedDist::Constant(c) => c,
            BoundedDist::Bernoulli(p) => p,
            BoundedDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            BoundedDist::Constant(c) => c,
            BoundedDist::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < p)),
            BoundedDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Outcome of a Monte Carlo inequality check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub estimate: f64,
    pub standard_error: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Checks `log E exp(theta (X - EX)) <= (hi - lo)^2 theta^2 / 8` by Monte Carlo,
/// allowing three standard errors of the log-MGF estimate.
pub fn hoeffding_check<R: Rng + ?Sized>(
    dist: BoundedDist,
    theta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<McCheck> {
    let (lo, hi) = dist.bounds();
    if !(lo <= hi) || !theta.is_finite() || samples < 2 {
        return Err(Error::Params("hoeffding_check needs lo <= hi, finite theta, >= 2 samples".into()));
    }
    let mean = dist.mean();
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v = (theta * (dist.sample(rng) - mean)).exp();
        s1 += v;
        s2 += v * v;
    }
    let m = s1 / samples as f64;
    let var = ((s2 / samples as f64) - m * m).max(0.0) * samples as f64 / (samples - 1) as f64;
    let estimate = m.ln();
    let standard_error = (var / samples as f64).sqrt() / m;
    let bound = (hi - lo).powi(2) * theta * theta / 8.0;
    let slack = 3.0 * standard_error;
    Ok(McCheck { estimate, standard_error, bound, slack, pass: estimate <= bound + slack })
}

/// Checks `E exp(gamma X^2) = (1 - 2 sigma^2 gamma)^{-1/2}` for `X ~ N(0, sigma^2)`.
///
/// `exp(gamma X^2)` has infinite variance once `gamma >= 1/(4 sigma^2)`, so the
/// expectation is estimated by importance sampling from a Cauchy proposal of
/// scale `sigma`, whose tails dominate the integrand and keep the weights bounded.
pub fn subgaussian_check<R: Rng + ?Sized>(
    sigma2: f64,
    gamma: f64,
    samples: usize,
    rng: &mut R,
) -> Result<McCheck> {
    if !(sigma2 > 0.0) || gamma >= 1.0 / (2.0 * sigma2) || samples < 2 {
        return Err(Error::Params(format!(
            "subgaussian_check needs sigma^2 > 0 and gamma < 1/(2 sigma^2); got sigma^2 = {sigma2}, gamma = {gamma}"
        )));
    }
    let sigma = sigma2.sqrt();
    let gauss_norm = 1.0 / (2.0 * PI * sigma2).sqrt();
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random::<f64>();
        let x = sigma * (PI * (u - 0.5)).tan();
        // log-space keeps far-tail draws at weight zero rather than inf * 0
        let log_proposal = -(PI * sigma * (1.0 + (x / sigma).powi(2))).ln();
        let log_w = gamma * x * x - x * x / (2.0 * sigma2) + gauss_norm.ln() - log_proposal;
        let w = log_w.exp();
        s1 += w;
        s2 += w * w;
    }
    let m = s1 / samples as f64;
    let var = ((s2 / samples as f64) - m * m).max(0.0) * samples as f64 / (samples - 1) as f64;
    let standard_error = (var / samples as f64).sqrt();
    let bound = (1.0 - 2.0 * sigma2 * gamma).powf(-0.5);
    let slack = 3.0 * standard_error;
    Ok(McCheck {
        estimate: m,
        standard_error,
        bound,
        slack,
        pass: (m - bound).abs() <= slack.max(1e-14),
    })
}

/// Parameter card printed by the `theory` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCard {
    pub params: ModelParams,
    pub eps0: f64,
    pub rho_star: f64,
    pub chi: f64,
    pub f_prime: f64,
    pub g: f64,
    pub kappa: f64,
    pub spectrum: Vec<SpectrumPrediction>,
}

impl TheoryCard {
    /// Card with `lambda_k` for `k = (j, 0, ..., 0)`, `j = 0..=cutoff`.
    pub fn new(p: &ModelParams, cutoff: usize) -> Result<Self> {
        p.validate()?;
        let s = p.stationary();
        let spectrum = (0..=cutoff as i64)
            .map(|j| {
                let mut k = vec![0i64; p.d];
                k[0] = j;
                p.spectrum(&k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: *p,
            eps0: p.eps0(),
            rho_star: s.rho,
            chi: s.chi,
            f_prime: s.f_prime,
            g: s.g,
            kappa: p.kappa(s.rho)?,
            spectrum,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,norm2,lambda_k\n");
        for row in &self.spectrum {
            let ks: Vec<String> = row.k.iter().map(|c| c.to_string()).collect();
            let n2: i64 = row.k.iter().map(|c| c * c).sum();
            out.push_str(&format!("{},{},{:.17e}\n", ks.join(" "), n2, row.variance));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(a: f64, b: f64, lambda: f64) -> ModelParams {
        ModelParams::new(a, b, lambda, 1, 8).unwrap()
    }

    #[test]
    fn f_and_g_values() {
        let q = p(1.0, 1.0, 0.5);
        assert_eq!(q.f(0.0).unwrap(), 1.0);
        assert_eq!(q.f(1.0).unwrap(), -1.0);
        assert_abs_diff_eq!(q.f(0.5).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(p(1.0, 2.0, 0.0).g(0.5).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(q.g(0.0).unwrap(), q.a);
        for i in 0..=20 {
            let r = i as f64 / 20.0;
            assert_abs_diff_eq!(q.g(r).unwrap() - q.f(r).unwrap(), 2.0 * q.b * r, epsilon = 1e-14);
        }
        assert!(q.f(1.5).is_err());
        assert!(q.g(-0.1).is_err());
    }

    #[test]
    fn rho_star_reference_values() {
        assert_abs_diff_eq!(p(2.0, 1.0, 0.0).rho_star(), 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p(1.3, 1.3, 0.0).rho_star(), 0.5, epsilon = 1e-14);
        let quad = (-3.0 + 17f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(p(1.0, 1.0, 0.5).rho_star(), quad, epsilon = 1e-14);
    }

    #[test]
    fn kappa_reference_values() {
        let q = p(1.0, 1.0, 0.0);
        assert_eq!(q.kappa(0.5).unwrap(), 1.0);
        let expected = 2.0 * 0.1875 * 3f64.ln() / 0.5;
        assert_abs_diff_eq!(q.kappa(0.25).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.823959, epsilon = 1e-6);
        assert!(q.kappa(0.0).is_err());
        assert!(q.kappa(1.0).is_err());
        // the removable singularity is continuous across the switch
        assert_abs_diff_eq!(q.kappa(0.5 + 1e-6).unwrap(), 1.0, epsilon = 1e-9);
        // lambda < 0 lowers eps0 to a + lambda
        let neg = p(1.0, 1.0, -0.4);
        assert_abs_diff_eq!(neg.kappa(0.5).unwrap(), 1.0 / 0.6, epsilon = 1e-14);
    }

    #[test]
    fn g_d_values() {
        assert_eq!(g_d(10, 1), 10.0);
        assert_abs_diff_eq!(g_d(10, 2), 2.302585, epsilon = 1e-6);
        assert_eq!(g_d(10, 3), 1.0);
    }

    #[test]
    fn spectrum_collapses_to_mobility_without_interaction() {
        for &(a, b) in &[(1.0, 1.0), (2.0, 0.5), (0.3, 4.0)] {
            let q = p(a, b, 0.0);
            let chi = q.stationary().chi;
            for n2 in [0.0, 1.0, 2.0, 17.0, 1e4] {
                assert_abs_diff_eq!(q.spectrum_norm2(n2).unwrap(), chi, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn spectrum_tends_to_mobility_and_zero_mode_value() {
        let q = p(1.0, 1.0, 0.2);
        let s = q.stationary();
        assert_abs_diff_eq!(q.spectrum_norm2(1e12).unwrap(), s.chi, epsilon = 1e-12);
        let zero = s.chi + (s.g + 2.0 * s.f_prime * s.chi) / (-2.0 * s.f_prime);
        assert_abs_diff_eq!(q.spectrum(&[0]).unwrap().variance, zero, epsilon = 1e-15);
        // lambda_k depends on k only through |k|^2
        let q3 = ModelParams::new(1.0, 1.0, 0.2, 3, 8).unwrap();
        assert_eq!(
            q3.spectrum(&[1, 2, 0]).unwrap().variance,
            q3.spectrum(&[0, -2, 1]).unwrap().variance
        );
    }

    #[test]
    fn mft_rates_match_f_and_g() {
        let q = p(1.0, 1.0, 1.0);
        let (a, b) = q.mft_rates(0.5).unwrap();
        assert_abs_diff_eq!(a, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.5, epsilon = 1e-15);
        assert_eq!(q.mft_rates(1.0).unwrap().0, 0.0);
        for i in 0..=100 {
            let r = i as f64 / 100.0;
            let (a, b) = q.mft_rates(r).unwrap();
            assert_abs_diff_eq!(a - b, q.f(r).unwrap(), epsilon = 1e-14);
            assert_abs_diff_eq!(a + b, q.g(r).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn xi_values_and_gaussian_kl_oracle() {
        assert_eq!(xi(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(xi(std::f64::consts::E).unwrap(), 0.359141, epsilon = 1e-6);
        assert!(xi(0.0).is_err());
        assert!(xi(-1.0).is_err());
        // KL(N(0, s2) || N(0, s1)) = log(s1/s2)/2 + s2/(2 s1) - 1/2 for variances s1, s2
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let r: f64 = 0.05 + 5.0 * rng.random::<f64>();
            let (s1, s2) = (1.7, 1.7 * r);
            let kl = 0.5 * (s1 / s2).ln() + s2 / (2.0 * s1) - 0.5;
            assert_abs_diff_eq!(xi(r).unwrap(), kl, epsilon = 1e-13);
        }
    }

    #[test]
    fn gaussian_entropy_vanishes_without_interaction() {
        for d in 1..=3 {
            let q = ModelParams::new(1.0, 2.0, 0.0, d, 8).unwrap();
            for k in [1, 4, 10] {
                assert_eq!(gaussian_entropy_sum(&q, k), 0.0);
            }
        }
    }

    #[test]
    fn gaussian_entropy_tail_decreases() {
        let q = p(1.0, 1.0, 0.2);
        let (s50, s100, s200) = (
            gaussian_entropy_sum(&q, 50),
            gaussian_entropy_sum(&q, 100),
            gaussian_entropy_sum(&q, 200),
        );
        assert!(s200 - s100 < s100 - s50);
        assert!(s200 >= s100 && s100 >= s50);
    }

    #[test]
    fn hoeffding_closed_form_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = hoeffding_check(BoundedDist::Bernoulli(0.5), 1.0, 200_000, &mut rng).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.bound, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(r.estimate, (0.5f64).cosh().ln(), epsilon = 4.0 * r.standard_error);
        let r = hoeffding_check(BoundedDist::Constant(3.0), 2.0, 100, &mut rng).unwrap();
        assert!(r.pass);
        assert_eq!(r.estimate, 0.0);
        let r = hoeffding_check(BoundedDist::Uniform { lo: 0.0, hi: 1.0 }, 2.0, 200_000, &mut rng).unwrap();
        let exact = ((2f64.exp() - 1.0) / 2.0).ln() - 1.0;
        assert_abs_diff_eq!(exact, 0.161, epsilon = 1e-3);
        assert_abs_diff_eq!(r.estimate, exact, epsilon = 4.0 * r.standard_error);
        assert!(r.pass && r.bound == 0.5);
    }

    #[test]
    fn subgaussian_gaussian_attains_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = subgaussian_check(1.0, 0.0, 10_000, &mut rng).unwrap();
        assert!(r.pass);
        assert_eq!(r.bound, 1.0);
        let r = subgaussian_check(1.0, 0.25, 400_000, &mut rng).unwrap();
        assert_abs_diff_eq!(r.bound, 2f64.sqrt(), epsilon = 1e-15);
        assert!(r.pass, "{r:?}");
        let r = subgaussian_check(2.0, 0.2, 400_000, &mut rng).unwrap();
        assert_abs_diff_eq!(r.bound, 5f64.sqrt(), epsilon = 1e-14);
        assert!(r.pass, "{r:?}");
        assert!(subgaussian_check(1.0, 0.5, 10, &mut rng).is_err());
    }

    #[test]
    fn theory_card_symmetric_case() {
        let card = TheoryCard::new(&p(1.0, 1.0, 0.0), 4).unwrap();
        assert_eq!(card.rho_star, 0.5);
        assert_eq!(card.chi, 0.25);
        assert_eq!(card.spectrum.len(), 5);
        assert!(card.to_csv().starts_with("k,norm2,lambda_k\n0,0,"));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0, 0.0, 1, 4).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.0, 1, 4).is_err());
        assert!(ModelParams::new(1.0, 1.0, -1.0, 1, 4).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 4, 4).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1, 1).is_err());
        let q = p(1.0, 2.0, -0.5);
        assert_eq!(q.eps0(), 0.5);
        assert_eq!(q.c_max(), 2.0);
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (0.05f64..10.0, 0.05f64..10.0, 0.0f64..1.0, 1usize..4).prop_map(|(a, b, t, d)| {
            // lambda ranges over (-a, 3a]
            let lambda = -a + 1e-3 + t * 4.0 * a;
            ModelParams::new(a, b, lambda, d, 16).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rho_star_is_a_stable_zero(q in arb_params()) {
            let s = q.stationary();
            prop_assert!(s.rho > 0.0 && s.rho < 1.0);
            prop_assert!(q.f(s.rho).unwrap().abs() < 1e-13);
            prop_assert!(s.f_prime < 0.0);
        }

        #[test]
        fn spectrum_forms_agree_and_are_positive(q in arb_params(), k in prop::collection::vec(-50i64..50, 1..4)) {
            let v = q.spectrum(&k).unwrap().variance;
            prop_assert!(v > 0.0);
            let s = q.stationary();
            let (w, sp) = spectrum_forms(&s, k.iter().map(|c| (c*c) as f64).sum());
            prop_assert!((w - sp).abs() <= 1e-12 * w.abs());
        }

        #[test]
        fn correction_sign_follows_lambda(a in 0.1f64..5.0, b in 0.1f64..5.0, t in -1.0f64..1.0) {
            let lambda = if t < 0.0 { t * a.min(0.9 * a) } else { t * a };
            let q = ModelParams::new(a, b, lambda, 1, 8).unwrap();
            let s = q.stationary();
            let corr = s.g + 2.0 * s.f_prime * s.chi;
            if lambda.abs() > 1e-9 {
                prop_assert_eq!(corr.signum(), lambda.signum());
            } else {
                prop_assert!(corr.abs() < 1e-8);
            }
        }

        #[test]
        fn kappa_is_symmetric(rho in 0.01f64..0.99, a in 0.2f64..3.0) {
            let q = ModelParams::new(a, 1.0, 0.0, 1, 8).unwrap();
            let l = q.kappa(rho).unwrap();
            let r = q.kappa(1.0 - rho).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * l.abs());
        }

        #[test]
        fn kappa_and_eps0_are_continuous_in_lambda(a in 0.2f64..3.0, b in 0.2f64..3.0, l in -0.15f64..2.0) {
            let lambda = l * a;
            let h = 1e-7;
            let q0 = ModelParams::new(a, b, lambda, 1, 8).unwrap();
            let q1 = ModelParams::new(a, b, lambda + h, 1, 8).unwrap();
            let k0 = q0.kappa(q0.rho_star()).unwrap();
            let k1 = q1.kappa(q1.rho_star()).unwrap();
            prop_assert!((k1 - k0).abs() < 1e-4 * (1.0 + k0.abs()));
            prop_assert!((q1.eps0() - q0.eps0()).abs() <= h + 1e-14);
        }
    }
}
