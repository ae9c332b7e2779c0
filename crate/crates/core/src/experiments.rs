//! The experiment pipelines behind the command-line driver. Each runner
//! returns its artifacts in memory together with pass/fail gates, and
//! [`run_experiment`] writes them next to a manifest with content digests.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::*;
use crate::error::{Error, Result};
use crate::exact::{product_measure, total_variation, ExactModel};
use crate::fields::{spectrum_estimate, ModeSeries};
use crate::flows::energy_scaling;
use crate::localeq::{marginal_from_streams, pinsker_audit, tv_to_product, TvEstimate};
use crate::pde::{hydro_vs_particles, solve_hydro, DensityProfile};
use crate::simulate::{run, InitialCondition, Observables, SimConfig};
use crate::spde::{
    covariance_check, lag_covariance_check, mode_variance_check, ou_stationary_variance, TrigPolynomial,
};
use crate::stats::auto_batch_means;
use crate::theory::{gaussian_entropy_sum, ModelParams, TheoryCard};

pub const MANIFEST_VERSION: u32 = 1;

/// A named output file held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    fn new(name: &str, content: String) -> Self {
        Self { name: name.into(), content }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub gates: Vec<Gate>,
    pub events: u64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.content.as_str())
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Runs the pipeline named by the configuration, without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg {
        ExperimentConfig::TheoryCard(c) => theory_card(c),
        ExperimentConfig::ExactAudit(c) => exact_audit(c),
        ExperimentConfig::Hydro(c) => hydro(c),
        ExperimentConfig::HydrostaticsScaling(c) => hydrostatics(c),
        ExperimentConfig::CltSpectrum(c) => clt_spectrum(c),
        ExperimentConfig::LocaleqSweep(c) => localeq_sweep(c),
        ExperimentConfig::FlowAudit(c) => flow_audit(c),
        ExperimentConfig::SpdeAudit(c) => spde_audit(c),
    }
}

#[derive(Serialize)]
struct CardJson {
    card: TheoryCard,
    c_max: f64,
    default_burn_in: f64,
    g_at_rho_star: f64,
    mft_rates: (f64, f64),
    smallness: crate::theory::SmallnessDiagnostic,
    gaussian_entropy_sum: f64,
    entropy_cutoff: usize,
}

pub fn theory_card(c: &TheoryCardConfig) -> Result<Outcome> {
    let p = c.model.params(c.model.n)?;
    let card = TheoryCard::new(&p, c.cutoff)?;
    let csv = card.to_csv();
    let s = p.stationary();
    let body = CardJson {
        c_max: p.c_max(),
        default_burn_in: p.default_burn_in(),
        g_at_rho_star: s.g,
        mft_rates: p.mft_rates(s.rho)?,
        smallness: p.smallness_diagnostic(c.smallness_constant)?,
        gaussian_entropy_sum: gaussian_entropy_sum(&p, c.entropy_cutoff),
        entropy_cutoff: c.entropy_cutoff,
        card,
    };
    Ok(Outcome {
        artifacts: vec![Artifact::new("card.json", json(&body)?), Artifact::new("spectrum.csv", csv)],
        gates: Vec::new(),
        events: 0,
    })
}

#[derive(Serialize)]
struct ExactJson {
    params: ModelParams,
    states: usize,
    adjoint: crate::exact::AdjointReport,
    stationary_residual: f64,
    stationary_tv_to_product: f64,
    log_sobolev: crate::exact::LogSobolevReport,
    stationary_entropy: f64,
    long_time: f64,
    long_time_entropy: f64,
}

pub fn exact_audit(c: &ExactAuditConfig) -> Result<Outcome> {
    let p = c.model.params(c.model.n)?;
    let model = ExactModel::new(p)?;
    let adjoint = model.adjoint_residual();
    let stat = model.stationary()?;
    let product = product_measure(model.torus().sites(), model.rho_star());
    let yau = model.yau_check(&c.times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let ls = model.log_sobolev_check(c.log_sobolev_trials, &mut rng)?;
    let worst = yau.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let entropy_gap = (yau.long_time_entropy - yau.stationary_entropy).abs();
    let gates = vec![
        Gate::new(
            "adjoint-identity",
            adjoint.closed_vs_ratio < c.adjoint_tol && adjoint.closed_vs_matrix < c.adjoint_tol,
            format!("closed/ratio {:.2e}, closed/matrix {:.2e}", adjoint.closed_vs_ratio, adjoint.closed_vs_matrix),
        ),
        Gate::new("yau-inequality", worst >= -c.yau_tol, format!("worst slack {worst:.3e}")),
        Gate::new("entropy-convergence", entropy_gap < 1e-8, format!("|H(T) - H(f_ss)| = {entropy_gap:.3e}")),
        Gate::new("log-sobolev", ls.violations == 0, format!("{} violations in {} trials", ls.violations, ls.trials)),
    ];
    let body = ExactJson {
        params: p,
        states: model.states(),
        adjoint,
        stationary_residual: stat.residual,
        stationary_tv_to_product: total_variation(&stat.pi, &product),
        log_sobolev: ls,
        stationary_entropy: yau.stationary_entropy,
        long_time: yau.long_time,
        long_time_entropy: yau.long_time_entropy,
    };
    Ok(Outcome {
        artifacts: vec![Artifact::new("exact.json", json(&body)?), Artifact::new("yau.csv", yau.to_csv())],
        gates,
        events: 0,
    })
}

pub fn hydro(c: &HydroConfig) -> Result<Outcome> {
    let mut csv = String::from("n,t,ell,l2_error,replicas\n");
    let mut last_t_errors = Vec::new();
    let mut trajectory = String::new();
    let mut events = 0;
    for &n in &c.sizes {
        let p = c.model.params(n)?;
        let rho = p.rho_star();
        let amp = c.amplitude;
        let u0 = move |x: &[f64]| rho + amp * (2.0 * PI * x[0]).cos();
        let rep = hydro_vs_particles(&u0, &p, c.replicas, &c.times, c.seed)?;
        for r in &rep.rows {
            csv.push_str(&format!("{},{},{},{:.12e},{}\n", r.n, r.t, r.ell, r.l2_error, r.replicas));
        }
        last_t_errors.push((n, rep.rows.last().map(|r| r.l2_error).unwrap_or(f64::NAN)));
        events += (c.replicas as f64 * c.times.last().copied().unwrap_or(0.0) * (n as f64).powi(p.d as i32 + 2)) as u64;
        if n == *c.sizes.iter().max().expect("validated") {
            let prof = DensityProfile::from_fn(n, p.d, u0)?;
            trajectory = solve_hydro(&prof, &c.times, &p, 1e-4)?.to_csv();
        }
    }
    let t_last = *c.times.last().expect("validated");
    let largest = last_t_errors.iter().max_by_key(|e| e.0).expect("validated");
    let mut sorted = last_t_errors.clone();
    sorted.sort_by_key(|e| e.0);
    let decreasing = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    let gates = vec![
        Gate::new(
            "l2-error",
            largest.1 < c.tolerance,
            format!("n = {}, t = {t_last}: {:.4e} (< {})", largest.0, largest.1, c.tolerance),
        ),
        Gate::new("error-decreases-in-n", decreasing, format!("{sorted:?}")),
    ];
    Ok(Outcome {
        artifacts: vec![Artifact::new("hydro.csv", csv), Artifact::new("pde_trajectory.csv", trajectory)],
        gates,
        events,
    })
}

/// Weighted least squares of `y` on `x`: (slope, intercept, slope standard error).
pub fn weighted_fit(x: &[f64], y: &[f64], sd: &[f64]) -> (f64, f64, f64) {
    let w: Vec<f64> = sd.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    let sy: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = w.iter().zip(x).map(|(a, b)| a * b * b).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((a, b), c)| a * b * c).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    (slope, intercept, (sw / det).sqrt())
}

pub fn hydrostatics(c: &HydrostaticsConfig) -> Result<Outcome> {
    let mut csv = String::from("n,mean_square,standard_error,tau,batches,lambda_0_over_n_d\n");
    let (mut xs, mut ys, mut sds) = (Vec::new(), Vec::new(), Vec::new());
    let mut events = 0;
    let mut warnings = Vec::new();
    for &n in &c.sizes {
        let p = c.model.params(n)?;
        let rho = p.rho_star();
        let mut cfg = SimConfig::new(p, c.seed, c.sample_interval, c.total_time, c.replicas);
        cfg.init = InitialCondition::Stationary;
        let streams = run(&cfg)?;
        events += streams.iter().map(|s| s.events.total()).sum::<u64>();
        let sq: Vec<Vec<f64>> = streams.iter().map(|s| s.density.iter().map(|m| (m - rho).powi(2)).collect()).collect();
        let refs: Vec<&[f64]> = sq.iter().map(|v| v.as_slice()).collect();
        let est = auto_batch_means(&refs)?;
        if let Some(w) = &est.warning {
            warnings.push(format!("n = {n}: {w}"));
        }
        let lambda0 = p.spectrum(&vec![0; p.d])?.variance / (n as f64).powi(p.d as i32);
        csv.push_str(&format!(
            "{n},{:.10e},{:.10e},{:.3},{},{:.10e}\n",
            est.mean, est.standard_error, est.tau, est.batches, lambda0
        ));
        xs.push((n as f64).ln());
        ys.push(est.mean.ln());
        sds.push(est.standard_error / est.mean);
    }
    let (slope, intercept, se) = weighted_fit(&xs, &ys, &sds);
    let fit = serde_json::json!({
        "slope": slope,
        "intercept": intercept,
        "slope_standard_error": se,
        "expected_slope": c.expected_slope,
        "warnings": warnings,
    });
    let gates = vec![Gate::new(
        "log-log-slope",
        (slope - c.expected_slope).abs() <= c.slope_tolerance,
        format!("slope {slope:.4} +- {se:.4}, expected {} +- {}", c.expected_slope, c.slope_tolerance),
    )];
    Ok(Outcome {
        artifacts: vec![Artifact::new("hydrostatics.csv", csv), Artifact::new("fit.json", json(&fit)?)],
        gates,
        events,
    })
}

/// Summary of the spectrum comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub tested_modes: usize,
    pub within: usize,
    /// Theory-weighted aggregate z of the estimates against the flat value `chi`.
    pub white_noise_z: f64,
    /// The same aggregate with the zero mode added; diagnostic only.
    pub white_noise_z_with_zero_mode: f64,
    pub warnings: Vec<String>,
}

/// `sum w_k z_k / sqrt(sum w_k^2)` with `z_k = (v_k - chi) / se_k` and the
/// most powerful weights `w_k = (lambda_k - chi) / se_k`.
pub fn white_noise_z(rows: &[(f64, f64, f64)], chi: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(v, se, th) in rows {
        let w = (th - chi) / se;
        num += w * (v - chi) / se;
        den += w * w;
    }
    num / den.sqrt()
}

pub fn clt_spectrum(c: &CltConfig) -> Result<Outcome> {
    let p = c.model.params(c.model.n)?;
    let mut cfg = SimConfig::new(p, c.seed, c.sample_interval, c.total_time, c.replicas);
    cfg.observables = Observables { mode_cutoff: Some(c.cutoff), ..Default::default() };
    let streams = run(&cfg)?;
    let events = streams.iter().map(|s| s.events.total()).sum();
    let series: Vec<&ModeSeries> = streams.iter().filter_map(|s| s.modes.as_ref()).collect();
    let est = spectrum_estimate(&series)?.with_theory(&p)?;
    let chi = p.stationary().chi;
    let limit = (c.cutoff * c.cutoff) as i64;
    let norm2 = |k: &[i64]| k.iter().map(|v| v * v).sum::<i64>();
    let tested: Vec<_> = est.rows.iter().filter(|r| (1..=limit).contains(&norm2(&r.k))).collect();
    let within = tested.iter().filter(|r| r.z.is_some_and(|z| z.abs() <= c.sigmas)).count();
    let triples = |rows: &[&crate::fields::SpectrumRow]| -> Vec<(f64, f64, f64)> {
        rows.iter().map(|r| (r.variance, r.standard_error, r.theory.unwrap_or(chi))).collect()
    };
    let z_flat = white_noise_z(&triples(&tested), chi);
    let with_zero: Vec<_> = est.rows.iter().filter(|r| norm2(&r.k) <= limit).collect();
    let summary = CltSummary {
        tested_modes: tested.len(),
        within,
        white_noise_z: z_flat,
        white_noise_z_with_zero_mode: white_noise_z(&triples(&with_zero), chi),
        warnings: est.warnings.clone(),
    };
    let needed = (c.pass_fraction * tested.len() as f64).ceil() as usize;
    let gates = vec![
        Gate::new(
            "modes-within-error",
            within >= needed,
            format!("{within} of {} modes within {} SE (need {needed})", tested.len(), c.sigmas),
        ),
        Gate::new(
            "rejects-white-noise",
            z_flat > c.white_noise_z,
            format!("aggregate z = {z_flat:.3} (need > {}); with k = 0: {:.3}", c.white_noise_z, summary.white_noise_z_with_zero_mode),
        ),
    ];
    Ok(Outcome {
        artifacts: vec![Artifact::new("spectrum.csv", est.to_csv()), Artifact::new("summary.json", json(&summary)?)],
        gates,
        events,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocaleqRow {
    pub n: usize,
    pub radius: usize,
    pub lambda: f64,
    pub estimate: TvEstimate,
    pub kl: f64,
    pub pinsker: bool,
}

pub fn localeq_sweep(c: &LocaleqConfig) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut events = 0;
    let block = ((c.block_time / c.sample_interval).round() as usize).max(1);
    for &n in &c.sizes {
        let p = c.model.params(n)?;
        let mut cfg = SimConfig::new(p, c.seed, c.sample_interval, c.total_time, c.replicas);
        cfg.observables = Observables { box_radius: Some(c.radius), box_block: block, ..Default::default() };
        let streams = run(&cfg)?;
        events += streams.iter().map(|s| s.events.total()).sum::<u64>();
        let m = marginal_from_streams(&streams, p.d, 1)?;
        let rho = p.rho_star();
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(n as u64);
        let estimate = tv_to_product(&m, rho, c.resamples, &mut rng)?;
        let audit = pinsker_audit(&m, rho)?;
        rows.push(LocaleqRow { n, radius: c.radius, lambda: p.lambda, estimate, kl: audit.kl, pinsker: audit.pass });
    }
    let mut csv = String::from("n,R,lambda,tv,error,bias_floor,effective_samples,blocks,kl,pinsker\n");
    for r in &rows {
        let e = &r.estimate;
        csv.push_str(&format!(
            "{},{},{},{:.8e},{:.8e},{:.8e},{:.6e},{},{:.8e},{}\n",
            r.n, r.radius, r.lambda, e.tv, e.error, e.bias_floor, e.effective_samples, e.blocks, r.kl, r.pinsker
        ));
    }
    let mut gates = vec![Gate::new(
        "pinsker",
        rows.iter().all(|r| r.pinsker),
        format!("{} marginals audited", rows.len()),
    )];
    let mut sorted: Vec<&LocaleqRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    if let (Some(small), Some(large)) = (sorted.first(), sorted.last()) {
        if small.n != large.n {
            let (a, b) = (&small.estimate, &large.estimate);
            gates.push(Gate::new(
                "tv-decreases-in-n",
                a.tv - a.error > b.tv + b.error,
                format!(
                    "TV(n={}) = {:.3e} +- {:.1e} (floor {:.1e}), TV(n={}) = {:.3e} +- {:.1e} (floor {:.1e})",
                    small.n, a.tv, a.error, a.bias_floor, large.n, b.tv, b.error, b.bias_floor
                ),
            ));
        }
    }
    Ok(Outcome { artifacts: vec![Artifact::new("localeq.csv", csv)], gates, events })
}

pub fn flow_audit(c: &FlowAuditConfig) -> Result<Outcome> {
    let mut csv = String::new();
    let mut gates = Vec::new();
    let mut worst: f64 = 0.0;
    for &d in &c.dims {
        let s = energy_scaling(&c.scales, d)?;
        let body = s.to_csv();
        if csv.is_empty() {
            csv.push_str(&body);
        } else {
            csv.push_str(body.split_once('\n').map_or("", |x| x.1));
        }
        worst = s.rows.iter().map(|r| r.divergence_residual).fold(worst, f64::max);
        gates.push(Gate::new(
            &format!("energy-spread-d{d}"),
            s.ratio_spread < c.max_spread,
            format!("max/min of E/g_d = {:.3}", s.ratio_spread),
        ));
    }
    gates.insert(0, Gate::new("divergence-residual", worst < c.residual_tol, format!("max residual {worst:.3e}")));
    Ok(Outcome { artifacts: vec![Artifact::new("flows.csv", csv)], gates, events: 0 })
}

pub fn spde_audit(c: &SpdeAuditConfig) -> Result<Outcome> {
    let p = c.model.params(c.model.n)?;
    let d = p.d;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let modes = mode_variance_check(&p, c.cutoff, c.samples, &mut rng)?;
    let lags = lag_covariance_check(&p, c.cutoff, &c.lags, c.samples, &mut rng)?;
    let mut e1 = vec![0i64; d];
    e1[0] = 1;
    let mut battery = vec![TrigPolynomial::cosine(&e1), TrigPolynomial::constant(d)];
    let mut mixed = TrigPolynomial { label: "mixed".into(), modes: Vec::new(), coef: Vec::new() };
    for (j, c0) in [(1i64, Complex64::new(0.3, 0.1)), (2, Complex64::new(-0.2, 0.4)), (3, Complex64::new(0.5, 0.0))] {
        let mut k = vec![0i64; d];
        k[0] = j.min(c.cutoff as i64);
        if d > 1 {
            k[1] = -(j - 1).min(c.cutoff as i64);
        }
        mixed.modes.push(k);
        mixed.coef.push(c0);
    }
    battery.push(mixed);
    let cov = covariance_check(&p, c.cutoff, &battery, c.samples, &mut rng)?;
    let mut identity_worst: f64 = 0.0;
    for _ in 0..c.identity_functions {
        let ms: Vec<Vec<i64>> = (0..6).map(|_| (0..d).map(|_| rng.random_range(-4i64..=4)).collect()).collect();
        let cs: Vec<Complex64> = (0..6).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        identity_worst = identity_worst.max(crate::pde::integral_identity_check(&ms, &cs, &p)?.residual);
    }
    let mut ou_worst: f64 = 0.0;
    for n2 in 0..=(d * c.cutoff * c.cutoff) {
        let a = ou_stationary_variance(&p, n2 as f64);
        let b = p.spectrum_norm2(n2 as f64)?;
        ou_worst = ou_worst.max((a - b).abs() / b);
    }
    let count = |r: &crate::spde::AuditReport| r.rows.iter().filter(|x| !x.within(c.sigmas)).count();
    let gates = vec![
        Gate::new("mode-variances", modes.all_within(c.sigmas), format!("{} of {} outside {} SE", count(&modes), modes.rows.len(), c.sigmas)),
        Gate::new("lag-covariances", lags.all_within(c.sigmas), format!("{} of {} outside {} SE", count(&lags), lags.rows.len(), c.sigmas)),
        Gate::new("quadratic-forms", cov.all_within(c.sigmas), format!("{} of {} outside {} SE", count(&cov), cov.rows.len(), c.sigmas)),
        Gate::new("gradient-integral-identity", identity_worst < c.identity_tol, format!("worst residual {identity_worst:.3e}")),
        Gate::new("ou-variance-is-spectrum", ou_worst < 1e-12, format!("worst relative gap {ou_worst:.3e}")),
    ];
    Ok(Outcome {
        artifacts: vec![
            Artifact::new("mode_variance.csv", modes.to_csv()),
            Artifact::new("lag_covariance.csv", lags.to_csv()),
            Artifact::new("quadratic_forms.csv", cov.to_csv()),
        ],
        gates,
        events: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub wall_clock_seconds: f64,
    pub events: u64,
    pub threads: usize,
    pub started_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub experiment: String,
    /// The resolved configuration, every default filled in.
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: std::collections::BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
    pub gates: Vec<Gate>,
    pub passed: bool,
    pub telemetry: Telemetry,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs an experiment, writes its artifacts and `manifest.json` into `out_dir`.
/// The artifact bodies depend only on the configuration; times live in the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    let started = Instant::now();
    let started_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let outcome = execute(cfg).map_err(|e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{}: {other}", cfg.name())),
    })?;
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    for a in &outcome.artifacts {
        let path: PathBuf = out_dir.join(&a.name);
        std::fs::write(&path, &a.content)?;
        outputs.push(OutputEntry { path: a.name.clone(), sha256: sha256_hex(a.content.as_bytes()), bytes: a.content.len() });
    }
    let resolved = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut versions = std::collections::BTreeMap::new();
    versions.insert("rdness".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        experiment: cfg.name().into(),
        config: cfg.clone(),
        config_sha256: sha256_hex(resolved.as_bytes()),
        seed: cfg.seed(),
        versions,
        outputs,
        passed: outcome.passed(),
        gates: outcome.gates,
        telemetry: Telemetry {
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            events: outcome.events,
            threads: rayon::current_num_threads(),
            started_unix,
        },
    };
    std::fs::write(out_dir.join("manifest.json"), json(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_theory_card() {
        let cfg = ExperimentConfig::from_toml("experiment = \"theory-card\"\n[model]\nlambda = 0.0\n").unwrap();
        let out = execute(&cfg).unwrap();
        let card: serde_json::Value = serde_json::from_str(out.artifact("card.json").unwrap()).unwrap();
        assert_eq!(card["card"]["rho_star"].as_f64().unwrap(), 0.5);
        assert_eq!(card["card"]["chi"].as_f64().unwrap(), 0.25);
        assert!(out.passed());
    }

    #[test]
    fn small_exact_audit() {
        let cfg = ExperimentConfig::from_toml("experiment = \"exact-audit\"\nlog_sobolev_trials = 200\n").unwrap();
        let out = execute(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.gates);
    }

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -1.0 * v + 0.5).collect();
        let (s, i, _) = weighted_fit(&x, &y, &[0.1, 0.2, 0.1, 0.3]);
        assert!((s + 1.0).abs() < 1e-12 && (i - 0.5).abs() < 1e-12);
    }

    #[test]
    fn white_noise_aggregate() {
        // estimates exactly at theory give z = sqrt(sum w^2)
        let rows = [(0.3, 0.01, 0.3), (0.28, 0.01, 0.28)];
        let z = white_noise_z(&rows, 0.25);
        assert!((z - (25.0f64 + 9.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn manifest_digests_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml("experiment = \"flow-audit\"\nscales = [2, 3]\ndims = [1, 2]\n").unwrap();
        let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
        let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.config_sha256, b.config_sha256);
        let text = std::fs::read_to_string(dir.path().join("a/flows.csv")).unwrap();
        assert_eq!(sha256_hex(text.as_bytes()), a.outputs[0].sha256);
        assert!(a.passed);
    }
}
