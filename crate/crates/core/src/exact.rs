//! Exact linear algebra on tiny tori: the generator as a dense matrix, the
//! stationary law, relative entropies, the carre du champ, the adjoint of the
//! generator applied to `1`, and the entropy inequalities used by the relative
//! entropy method, all as machine-checkable statements.
//!
//! States are indexed by the bit encoding of [`crate::lattice`] (bit `x` is
//! site `x`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ParticleConfig, Torus};
use crate::simulate::reaction_rate;
use crate::theory::ModelParams;

/// Largest number of sites handled by the dense solver (4096 states).
pub const MAX_EXACT_SITES: usize = 12;

/// Which part of the generator a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Full,
    Exchange,
    Reaction,
}

/// The chain on `{0,1}^{T_n^d}` with its reference product measure `nu_{rho*}`.
#[derive(Clone, Debug)]
pub struct ExactModel {
    params: ModelParams,
    torus: Torus,
    rho: f64,
    edges: Vec<[u32; 2]>,
    /// `rates[s * sites + x] = c_x(s)`.
    rates: Vec<f64>,
    nu: Vec<f64>,
}

impl ExactModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let torus = Torus::new(params.n, params.d)?;
        let sites = torus.sites();
        if sites > MAX_EXACT_SITES {
            return Err(Error::Size(format!(
                "{sites} sites exceed the dense exact limit of {MAX_EXACT_SITES}"
            )));
        }
        let rho = params.rho_star();
        let states = 1usize << sites;
        let mut rates = Vec::with_capacity(states * sites);
        for s in 0..states {
            let eta = ParticleConfig::from_state_index(torus, s as u64);
            for x in 0..sites {
                rates.push(reaction_rate(&eta, &torus.from_linear(x), &params));
            }
        }
        let nu = product_measure(sites, rho);
        Ok(Self { params, torus, rho, edges: torus.edge_table(), rates, nu })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn states(&self) -> usize {
        1 << self.torus.sites()
    }

    pub fn rho_star(&self) -> f64 {
        self.rho
    }

    /// `nu_{rho*}` as a table over states.
    pub fn reference(&self) -> &[f64] {
        &self.nu
    }

    pub fn rate(&self, state: usize, x: usize) -> f64 {
        self.rates[state * self.torus.sites() + x]
    }

    fn exchange_rate(&self) -> f64 {
        (self.torus.n() * self.torus.n()) as f64
    }

    /// Transitions out of `state` as `(target, rate)`, one entry per edge or site.
    fn transitions(&self, state: usize, part: Part) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if part != Part::Reaction {
            for &[x, y] in &self.edges {
                let (x, y) = (x as usize, y as usize);
                if (state >> x) & 1 != (state >> y) & 1 {
                    out.push((state ^ (1 << x) ^ (1 << y), self.exchange_rate()));
                }
            }
        }
        if part != Part::Exchange {
            for x in 0..self.torus.sites() {
                out.push((state ^ (1 << x), self.rate(state, x)));
            }
        }
        out
    }

    /// Dense generator `Q[s][s']` of the selected part; rows sum to zero.
    pub fn generator(&self, part: Part) -> DMatrix<f64> {
        let m = self.states();
        let mut q = DMatrix::zeros(m, m);
        for s in 0..m {
            let mut out = 0.0;
            for (t, r) in self.transitions(s, part) {
                q[(s, t)] += r;
                out += r;
            }
            q[(s, s)] -= out;
        }
        q
    }

    /// `(L f)(s) = sum_t Q[s][t] (f(t) - f(s))`.
    pub fn apply(&self, f: &[f64], part: Part) -> Vec<f64> {
        (0..self.states())
            .map(|s| self.transitions(s, part).iter().map(|&(t, r)| r * (f[t] - f[s])).sum())
            .collect()
    }

    /// `Gamma f = L(f^2) - 2 f L f = sum_t Q[s][t] (f(t) - f(s))^2`.
    pub fn carre_du_champ(&self, f: &[f64], part: Part) -> Vec<f64> {
        (0..self.states())
            .map(|s| self.transitions(s, part).iter().map(|&(t, r)| r * (f[t] - f[s]).powi(2)).sum())
            .collect()
    }

    /// `int Gamma sqrt(f) d nu_{rho*}` for a density `f` w.r.t. `nu_{rho*}`.
    pub fn dirichlet_form(&self, f: &[f64], part: Part) -> f64 {
        let root: Vec<f64> = f.iter().map(|v| v.max(0.0).sqrt()).collect();
        self.carre_du_champ(&root, part).iter().zip(&self.nu).map(|(g, w)| g * w).sum()
    }

    /// The unique `pi` with `pi^T Q = 0`, by LU on the system with one balance
    /// equation replaced by normalisation.
    pub fn stationary(&self) -> Result<Stationary> {
        let q = self.generator(Part::Full);
        let m = self.states();
        let mut a = q.transpose();
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(m);
        rhs[m - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("stationary system is singular; generator reducible".into()))?;
        let pi: Vec<f64> = pi.iter().copied().collect();
        let balance = DVector::from_column_slice(&pi).transpose() * &q;
        let residual = balance.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Ok(Stationary { pi, residual })
    }

    /// `L* 1` in closed form, `(lambda / 2d rho*) sum_x sum_{y ~ x} eta_bar_x eta_bar_y`
    /// with `eta_bar = eta - rho*`. The inner sum runs over the `2d` neighbours
    /// of each site, so every bond is counted twice; summing over unordered
    /// bonds the prefactor is `lambda / (d rho*)`.
    pub fn adjoint_one_closed(&self) -> Vec<f64> {
        let coef = self.params.lambda / (self.params.d as f64 * self.rho);
        (0..self.states())
            .map(|s| {
                let c = |x: u32| ((s >> x) & 1) as f64 - self.rho;
                coef * self.edges.iter().map(|&[x, y]| c(x) * c(y)).sum::<f64>()
            })
            .collect()
    }

    /// `L* 1` from the adjoint definition: the exchange part leaves the product
    /// measure invariant, and the reaction part contributes
    /// `sum_x (c_x(eta^x) nu(eta^x)/nu(eta) - c_x(eta))` with the density ratio
    /// `eta_x (1-rho)/rho + (1-eta_x) rho/(1-rho)`.
    pub fn adjoint_one_ratio(&self) -> Vec<f64> {
        let r = self.rho;
        (0..self.states())
            .map(|s| {
                (0..self.torus.sites())
                    .map(|x| {
                        let occ = (s >> x) & 1 == 1;
                        let ratio = if occ { (1.0 - r) / r } else { r / (1.0 - r) };
                        self.rate(s ^ (1 << x), x) * ratio - self.rate(s, x)
                    })
                    .sum()
            })
            .collect()
    }

    /// `L* 1(eta) = (nu Q)(eta) / nu(eta)` by a dense vector-matrix product.
    pub fn adjoint_one_matrix(&self) -> Vec<f64> {
        let q = self.generator(Part::Full);
        let nu = DVector::from_column_slice(&self.nu);
        let flow = nu.transpose() * q;
        flow.iter().zip(&self.nu).map(|(f, w)| f / w).collect()
    }

    /// Largest pointwise disagreement among the three routes to `L* 1`.
    pub fn adjoint_residual(&self) -> AdjointReport {
        let closed = self.adjoint_one_closed();
        let ratio = self.adjoint_one_ratio();
        let matrix = self.adjoint_one_matrix();
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        AdjointReport {
            closed_vs_ratio: diff(&closed, &ratio),
            closed_vs_matrix: diff(&closed, &matrix),
            max_abs: closed.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    /// Law at time `t` started from `mu0`, `mu0 exp(t Q)`.
    pub fn evolve(&self, mu0: &[f64], t: f64) -> Vec<f64> {
        let q = self.generator(Part::Full) * t;
        let p = q.exp();
        let mu = DVector::from_column_slice(mu0).transpose() * p;
        mu.iter().copied().collect()
    }

    /// Yau's inequality `H' <= -int Gamma sqrt(f) d nu + int L*1 f d nu` along the
    /// forward equation from `nu_{rho*}`, at each time of `times`.
    pub fn yau_check(&self, times: &[f64]) -> Result<YauReport> {
        let q = self.generator(Part::Full);
        let lstar = self.adjoint_one_closed();
        let nu = &self.nu;
        let law = |t: f64| -> Vec<f64> {
            let p = (&q * t).exp();
            (DVector::from_column_slice(nu).transpose() * p).iter().copied().collect()
        };
        let entropy = |mu: &[f64]| relative_entropy(mu, nu);
        let mut rows = Vec::with_capacity(times.len());
        for &t in times {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("checkpoint times must be > 0, got {t}")));
            }
            let h = (t / 10.0).min(1e-4);
            let mu = law(t);
            let h_plus = entropy(&law(t + h));
            let h_minus = entropy(&law(t - h));
            let derivative = (h_plus - h_minus) / (2.0 * h);
            // d/dt sum mu log(mu/nu) = sum (mu Q) log(mu/nu)
            let mu_q = DVector::from_column_slice(&mu).transpose() * &q;
            let analytic: f64 = mu_q.iter().zip(&mu).zip(nu).map(|((dq, m), w)| dq * (m / w).ln()).sum();
            let f: Vec<f64> = mu.iter().zip(nu).map(|(m, w)| m / w).collect();
            let production = self.dirichlet_form(&f, Part::Full);
            let source: f64 = lstar.iter().zip(&f).zip(nu).map(|((l, fv), w)| l * fv * w).sum();
            rows.push(YauRow {
                t,
                entropy: entropy(&mu),
                derivative,
                analytic_derivative: analytic,
                production,
                source,
                slack: -production + source - derivative,
            });
        }
        let stationary = self.stationary()?;
        let target = relative_entropy(&stationary.pi, nu);
        let eps0 = self.params.eps0();
        let t_long = 80.0 / eps0;
        let long = entropy(&law(t_long));
        Ok(YauReport { rows, stationary_entropy: target, long_time: t_long, long_time_entropy: long })
    }

    /// `H(f; nu_{rho*}) <= kappa(rho*) int Gamma^r sqrt(f) d nu_{rho*}` for random densities.
    pub fn log_sobolev_check<R: Rng + ?Sized>(&self, trials: usize, rng: &mut R) -> Result<LogSobolevReport> {
        let kappa = self.params.kappa(self.rho)?;
        let mut report = LogSobolevReport { trials: 0, violations: 0, worst_ratio: 0.0, kappa, worst_slack: f64::INFINITY };
        for i in 0..trials {
            let f = match i % 4 {
                // near-extremal: almost all mass on a single state
                0 => concentrated_density(&self.nu, rng.random_range(0..self.states()), 1e-6),
                _ => random_density(&self.nu, rng, 0.5 + 3.0 * (i % 4) as f64),
            };
            self.log_sobolev_one(&f, &mut report);
        }
        Ok(report)
    }

    fn log_sobolev_one(&self, f: &[f64], report: &mut LogSobolevReport) {
        let h = density_entropy(f, &self.nu);
        let d = self.dirichlet_form(f, Part::Reaction);
        let slack = report.kappa * d - h;
        report.trials += 1;
        if slack < -1e-10 {
            report.violations += 1;
        }
        report.worst_slack = report.worst_slack.min(slack);
        if d > 0.0 {
            report.worst_ratio = report.worst_ratio.max(h / d);
        }
    }

    /// The log-Sobolev check for one given density.
    pub fn log_sobolev_single(&self, f: &[f64]) -> Result<LogSobolevReport> {
        let kappa = self.params.kappa(self.rho)?;
        let mut report = LogSobolevReport { trials: 0, violations: 0, worst_ratio: 0.0, kappa, worst_slack: f64::INFINITY };
        self.log_sobolev_one(f, &mut report);
        Ok(report)
    }

    /// `Gamma_n X^n(g)` written out edge by edge: `n^{-d} sum_{x~y} n^2 (eta_y -
    /// eta_x)^2 (g_y - g_x)^2 + n^{-d} sum_x c_x g_x^2`, unordered edges.
    pub fn field_carre_du_champ_formula(&self, g: &[f64]) -> Vec<f64> {
        let nd = self.torus.sites() as f64;
        let n2 = self.exchange_rate();
        (0..self.states())
            .map(|s| {
                let bit = |x: u32| ((s >> x) & 1) as f64;
                let ex: f64 = self
                    .edges
                    .iter()
                    .map(|&[x, y]| n2 * (bit(y) - bit(x)).powi(2) * (g[y as usize] - g[x as usize]).powi(2))
                    .sum();
                let re: f64 = (0..self.torus.sites()).map(|x| self.rate(s, x) * g[x] * g[x]).sum();
                (ex + re) / nd
            })
            .collect()
    }

    /// `X^n(g)` as a function on states.
    pub fn field_function(&self, g: &[f64]) -> Vec<f64> {
        let norm = (self.torus.sites() as f64).sqrt();
        (0..self.states())
            .map(|s| (0..self.torus.sites()).map(|x| (((s >> x) & 1) as f64 - self.rho) * g[x]).sum::<f64>() / norm)
            .collect()
    }

    /// `max |pi(s) Q(s,t) - pi(t) Q(t,s)|` over pairs of states.
    pub fn reversibility_defect(&self, pi: &[f64], part: Part) -> f64 {
        let q = self.generator(part);
        let m = self.states();
        let mut worst = 0.0f64;
        for s in 0..m {
            for t in 0..m {
                if s != t {
                    worst = worst.max((pi[s] * q[(s, t)] - pi[t] * q[(t, s)]).abs());
                }
            }
        }
        worst
    }
}

/// Product Bernoulli(`rho`) law over `2^sites` states.
pub fn product_measure(sites: usize, rho: f64) -> Vec<f64> {
    (0..1usize << sites)
        .map(|s| {
            let ones = (s as u64).count_ones() as i32;
            rho.powi(ones) * (1.0 - rho).powi(sites as i32 - ones)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// `max |(pi^T Q)(s)|`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub closed_vs_ratio: f64,
    pub closed_vs_matrix: f64,
    pub max_abs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YauRow {
    pub t: f64,
    pub entropy: f64,
    /// Central-difference derivative of the entropy.
    pub derivative: f64,
    pub analytic_derivative: f64,
    /// `int Gamma sqrt(f_t) d nu`.
    pub production: f64,
    /// `int L*1 f_t d nu`.
    pub source: f64,
    /// `-production + source - derivative`; the inequality holds when `>= 0`.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YauReport {
    pub rows: Vec<YauRow>,
    pub stationary_entropy: f64,
    pub long_time: f64,
    pub long_time_entropy: f64,
}

impl YauReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,entropy,derivative,analytic_derivative,production,source,slack\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.t, r.entropy, r.derivative, r.analytic_derivative, r.production, r.source, r.slack
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest observed `H / int Gamma^r sqrt(f)`, a lower bound on the optimal constant.
    pub worst_ratio: f64,
    pub kappa: f64,
    pub worst_slack: f64,
}

/// `sum mu log(mu / nu)`; `+inf` when `mu` charges a state `nu` does not.
pub fn relative_entropy(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .map(|(&m, &w)| {
            if m <= 0.0 {
                0.0
            } else if w <= 0.0 {
                f64::INFINITY
            } else {
                m * (m / w).ln()
            }
        })
        .sum()
}

/// `H(f; nu) = int f log f d nu` for a density `f` w.r.t. `nu`.
pub fn density_entropy(f: &[f64], nu: &[f64]) -> f64 {
    f.iter().zip(nu).map(|(&v, &w)| if v > 0.0 { w * v * v.ln() } else { 0.0 }).sum()
}

/// Total variation `sup_A |mu(A) - nu(A)|`.
pub fn total_variation(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `int h f d nu <= (H(f; nu) + log int e^{gamma h} d nu) / gamma`; returns the slack.
pub fn entropy_inequality_slack(h: &[f64], f: &[f64], gamma: f64, nu: &[f64]) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    let lhs: f64 = h.iter().zip(f).zip(nu).map(|((hv, fv), w)| hv * fv * w).sum();
    // log-sum-exp for the exponential moment
    let top = h.iter().zip(nu).filter(|(_, &w)| w > 0.0).map(|(hv, _)| gamma * hv).fold(f64::NEG_INFINITY, f64::max);
    let moment: f64 = h.iter().zip(nu).map(|(hv, w)| w * (gamma * hv - top).exp()).sum();
    let rhs = (density_entropy(f, nu) + top + moment.ln()) / gamma;
    Ok(rhs - lhs)
}

/// A random density w.r.t. `nu` with log-normal weights of spread `scale`.
pub fn random_density<R: Rng + ?Sized>(nu: &[f64], rng: &mut R, scale: f64) -> Vec<f64> {
    let w: Vec<f64> = nu
        .iter()
        .map(|_| {
            let u: f64 = rng.random::<f64>() - 0.5;
            (scale * 2.0 * u).exp()
        })
        .collect();
    let z: f64 = w.iter().zip(nu).map(|(a, b)| a * b).sum();
    w.into_iter().map(|v| v / z).collect()
}

/// The density of `(1 - eps) delta_state + eps nu` w.r.t. `nu`.
pub fn concentrated_density(nu: &[f64], state: usize, eps: f64) -> Vec<f64> {
    (0..nu.len()).map(|s| eps + if s == state { (1.0 - eps) / nu[s] } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(a: f64, b: f64, lambda: f64, d: usize, n: usize) -> ExactModel {
        ExactModel::new(ModelParams::new(a, b, lambda, d, n).unwrap()).unwrap()
    }

    #[test]
    fn generator_rows_and_entries() {
        let m = model(1.0, 2.0, 0.6, 1, 3);
        let q = m.generator(Part::Full);
        assert_eq!(q.nrows(), 8);
        for s in 0..8 {
            assert!(q.row(s).sum().abs() < 1e-13);
            for t in 0..8 {
                if s != t {
                    assert!(q[(s, t)] >= 0.0);
                }
            }
        }
        // 0b001 -> 0b010 exchanges sites 0 and 1
        assert_eq!(q[(0b001, 0b010)], 9.0);
        // state 0b010: site 0 empty with one occupied neighbour
        assert_abs_diff_eq!(q[(0b010, 0b011)], 1.3, epsilon = 1e-15);
        assert_eq!(q[(0b010, 0b000)], 2.0);
        assert!(ExactModel::new(ModelParams::new(1.0, 1.0, 0.0, 1, 13).unwrap()).is_err());
    }

    #[test]
    fn two_by_two_uses_parallel_edges() {
        let m = model(1.0, 1.0, 0.5, 2, 2);
        let q = m.generator(Part::Exchange);
        // sites 0 and 1 are joined by two parallel bonds along axis 0
        assert_eq!(q[(0b0001, 0b0010)], 8.0);
        assert_eq!(m.edges.len(), 8);
    }

    #[test]
    fn stationary_is_product_without_interaction() {
        let m = model(1.0, 3.0, 0.0, 1, 4);
        let st = m.stationary().unwrap();
        assert!(st.residual < 1e-12);
        let product = product_measure(4, 0.25);
        assert!(total_variation(&st.pi, &product) < 1e-10);
        let sym = model(1.7, 1.7, 0.0, 1, 3).stationary().unwrap();
        for p in &sym.pi {
            assert_abs_diff_eq!(*p, 0.125, epsilon = 1e-12);
        }
    }

    #[test]
    fn detailed_balance_of_flips_without_interaction() {
        let m = model(0.8, 1.9, 0.0, 1, 4);
        assert!(m.reversibility_defect(&m.nu, Part::Reaction) < 1e-14);
        assert!(m.reversibility_defect(&m.nu, Part::Full) < 1e-13);
    }

    #[test]
    fn interaction_breaks_reversibility() {
        // Kolmogorov's criterion: some 3-cycle has unequal forward and backward rate products
        let m = model(1.0, 1.0, 0.6, 1, 4);
        let q = m.generator(Part::Full);
        let mut worst = 0.0f64;
        for s in 0..16 {
            for t in 0..16 {
                for u in 0..16 {
                    let fwd = q[(s, t)] * q[(t, u)] * q[(u, s)];
                    let bwd = q[(s, u)] * q[(u, t)] * q[(t, s)];
                    if s != t && t != u && u != s {
                        worst = worst.max((fwd - bwd).abs());
                    }
                }
            }
        }
        assert!(worst > 1.0, "{worst}");
        let zero = model(1.0, 1.0, 0.0, 1, 4);
        let st = zero.stationary().unwrap();
        assert!(zero.reversibility_defect(&st.pi, Part::Full) < 1e-12);
        let st = m.stationary().unwrap();
        assert!(m.reversibility_defect(&st.pi, Part::Full) > 1e-6);
    }

    #[test]
    fn adjoint_one_routes_agree() {
        for &(lambda, d, n) in &[(0.4, 1, 3), (-0.3, 1, 4), (0.7, 2, 2), (1.5, 1, 5)] {
            let m = model(1.0, 1.0, lambda, d, n);
            let r = m.adjoint_residual();
            assert!(r.closed_vs_ratio < 1e-12, "{r:?}");
            assert!(r.closed_vs_matrix < 1e-10, "{r:?}");
        }
        let zero = model(1.0, 2.0, 0.0, 1, 4);
        assert!(zero.adjoint_one_closed().iter().all(|v| *v == 0.0));
        assert!(zero.adjoint_one_ratio().iter().all(|v| v.abs() < 1e-12));
        let m = model(1.0, 1.0, 0.4, 1, 3);
        // all sites occupied: every one of the 2d n^d ordered neighbour pairs gives (1 - rho*)^2
        let full = m.adjoint_one_closed()[7];
        let rho = m.rho_star();
        assert_abs_diff_eq!(full, 0.4 / (2.0 * rho) * 6.0 * (1.0 - rho).powi(2), epsilon = 1e-14);
    }

    #[test]
    fn carre_du_champ_identities() {
        let m = model(1.0, 1.5, 0.3, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
        let lf = m.apply(&f, Part::Full);
        let lf2 = m.apply(&f2, Part::Full);
        let gamma = m.carre_du_champ(&f, Part::Full);
        let ex = m.carre_du_champ(&f, Part::Exchange);
        let re = m.carre_du_champ(&f, Part::Reaction);
        for s in 0..16 {
            assert_abs_diff_eq!(gamma[s], lf2[s] - 2.0 * f[s] * lf[s], epsilon = 1e-12);
            assert_abs_diff_eq!(gamma[s], ex[s] + re[s], epsilon = 1e-12);
            assert!(gamma[s] >= 0.0);
        }
        let constant = vec![3.0; 16];
        assert!(m.carre_du_champ(&constant, Part::Full).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn field_carre_du_champ_matches_edge_formula() {
        let m = model(1.0, 1.0, 0.5, 1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let g: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
            let direct = m.carre_du_champ(&m.field_function(&g), Part::Full);
            let formula = m.field_carre_du_champ_formula(&g);
            for (a, b) in direct.iter().zip(&formula) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn relative_entropy_cases() {
        let p = product_measure(3, 0.3);
        assert_eq!(relative_entropy(&p, &p), 0.0);
        let q = product_measure(3, 0.6);
        let kl = 0.3 * (0.3f64 / 0.6).ln() + 0.7 * (0.7f64 / 0.4).ln();
        assert_abs_diff_eq!(relative_entropy(&p, &q), 3.0 * kl, epsilon = 1e-14);
        let tv = total_variation(&p, &q);
        assert!(2.0 * tv * tv <= relative_entropy(&p, &q));
        let mut point = vec![0.0; 8];
        point[3] = 1.0;
        assert!(relative_entropy(&p, &point).is_infinite());
    }

    #[test]
    fn stationary_entropy_shrinks_with_interaction() {
        for n in [3, 4] {
            let h = |lambda: f64| {
                let m = model(1.0, 1.0, lambda, 1, n);
                relative_entropy(&m.stationary().unwrap().pi, &m.nu)
            };
            let (h1, h3) = (h(0.1), h(0.3));
            assert!(h1.is_finite() && h3.is_finite());
            assert!(h1 < h3 && h(0.01) < h1 && h(0.0) < 1e-12);
        }
    }

    #[test]
    fn yau_inequality_small_case() {
        let m = model(1.0, 1.0, 0.3, 1, 3);
        let r = m.yau_check(&[0.01, 0.1, 1.0]).unwrap();
        for row in &r.rows {
            assert!(row.slack >= -1e-6, "{row:?}");
            assert!((row.derivative - row.analytic_derivative).abs() < 1e-6, "{row:?}");
        }
        assert!((r.long_time_entropy - r.stationary_entropy).abs() < 1e-8);
        let zero = model(1.0, 1.0, 0.0, 1, 3).yau_check(&[0.1, 1.0]).unwrap();
        for row in &zero.rows {
            assert!(row.entropy.abs() < 1e-12 && row.source.abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_inequality_cases() {
        let nu = product_measure(3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = vec![1.0; 8];
        let h: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        assert!(entropy_inequality_slack(&h, &one, 0.7, &nu).unwrap() >= 0.0);
        // constant h: equality for f = 1, otherwise the slack is exactly H(f) / gamma
        let c = vec![1.3; 8];
        assert!(entropy_inequality_slack(&c, &one, 2.0, &nu).unwrap().abs() < 1e-12);
        let f = random_density(&nu, &mut rng, 2.0);
        let slack = entropy_inequality_slack(&c, &f, 2.0, &nu).unwrap();
        assert_abs_diff_eq!(slack, density_entropy(&f, &nu) / 2.0, epsilon = 1e-12);
        for _ in 0..1000 {
            let h: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let f = random_density(&nu, &mut rng, 3.0);
            let gamma = 0.01 + 5.0 * rng.random::<f64>();
            assert!(entropy_inequality_slack(&h, &f, gamma, &nu).unwrap() >= -1e-10);
        }
        assert!(entropy_inequality_slack(&h, &one, 0.0, &nu).is_err());
    }

    #[test]
    fn log_sobolev_cases() {
        let m = model(1.0, 1.0, 0.0, 1, 3);
        let r = m.log_sobolev_single(&[1.0; 8]).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.worst_slack.abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = m.log_sobolev_check(10_000, &mut rng).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.worst_ratio <= r.kappa);
        let probe = concentrated_density(&m.nu, 5, 1e-6);
        assert_eq!(m.log_sobolev_single(&probe).unwrap().violations, 0);
    }
}
