//! Experiment configuration files: flat TOML tables tagged by `experiment`,
//! every omitted key taking the documented default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    TheoryCard(TheoryCardConfig),
    ExactAudit(ExactAuditConfig),
    Hydro(HydroConfig),
    HydrostaticsScaling(HydrostaticsConfig),
    CltSpectrum(CltConfig),
    LocaleqSweep(LocaleqConfig),
    FlowAudit(FlowAuditConfig),
    SpdeAudit(SpdeAuditConfig),
}

pub const EXPERIMENTS: [&str; 8] = [
    "theory-card",
    "exact-audit",
    "hydro",
    "hydrostatics-scaling",
    "clt-spectrum",
    "localeq-sweep",
    "flow-audit",
    "spde-audit",
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The configuration with every default filled in, for a named experiment.
    pub fn default_for(name: &str) -> Result<Self> {
        Self::from_toml(&format!("experiment = \"{name}\"\n"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TheoryCard(_) => EXPERIMENTS[0],
            Self::ExactAudit(_) => EXPERIMENTS[1],
            Self::Hydro(_) => EXPERIMENTS[2],
            Self::HydrostaticsScaling(_) => EXPERIMENTS[3],
            Self::CltSpectrum(_) => EXPERIMENTS[4],
            Self::LocaleqSweep(_) => EXPERIMENTS[5],
            Self::FlowAudit(_) => EXPERIMENTS[6],
            Self::SpdeAudit(_) => EXPERIMENTS[7],
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::TheoryCard(_) | Self::FlowAudit(_) => 0,
            Self::ExactAudit(c) => c.seed,
            Self::Hydro(c) => c.seed,
            Self::HydrostaticsScaling(c) => c.seed,
            Self::CltSpectrum(c) => c.seed,
            Self::LocaleqSweep(c) => c.seed,
            Self::SpdeAudit(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::TheoryCard(_) | Self::FlowAudit(_) => {}
            Self::ExactAudit(c) => c.seed = seed,
            Self::Hydro(c) => c.seed = seed,
            Self::HydrostaticsScaling(c) => c.seed = seed,
            Self::CltSpectrum(c) => c.seed = seed,
            Self::LocaleqSweep(c) => c.seed = seed,
            Self::SpdeAudit(c) => c.seed = seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonempty = |name: &str, len: usize| {
            if len > 0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must not be empty")))
            }
        };
        match self {
            Self::TheoryCard(c) => c.model.params(c.model.n).map(|_| ()),
            Self::ExactAudit(c) => {
                c.model.params(c.model.n)?;
                nonempty("times", c.times.len())
            }
            Self::Hydro(c) => {
                nonempty("sizes", c.sizes.len())?;
                nonempty("times", c.times.len())?;
                for &n in &c.sizes {
                    c.model.params(n)?;
                }
                Ok(())
            }
            Self::HydrostaticsScaling(c) => {
                positive("total_time", c.total_time)?;
                positive("sample_interval", c.sample_interval)?;
                if c.sizes.len() < 2 {
                    return Err(Error::Config("a scaling fit needs at least two sizes".into()));
                }
                for &n in &c.sizes {
                    c.model.params(n)?;
                }
                Ok(())
            }
            Self::CltSpectrum(c) => {
                positive("total_time", c.total_time)?;
                positive("sample_interval", c.sample_interval)?;
                c.model.params(c.model.n).map(|_| ())
            }
            Self::LocaleqSweep(c) => {
                positive("total_time", c.total_time)?;
                positive("sample_interval", c.sample_interval)?;
                positive("block_time", c.block_time)?;
                nonempty("sizes", c.sizes.len())?;
                for &n in &c.sizes {
                    c.model.params(n)?;
                }
                Ok(())
            }
            Self::FlowAudit(c) => {
                nonempty("scales", c.scales.len())?;
                nonempty("dims", c.dims.len())
            }
            Self::SpdeAudit(c) => {
                nonempty("lags", c.lags.len())?;
                c.model.params(c.model.n).map(|_| ())
            }
        }
    }
}

/// Model parameters as written in a config; `n` is ignored where an
/// experiment sweeps over sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub d: usize,
    pub n: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, lambda: 0.2, d: 1, n: 256 }
    }
}

impl ModelSection {
    pub fn params(&self, n: usize) -> Result<ModelParams> {
        ModelParams::new(self.a, self.b, self.lambda, self.d, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryCardConfig {
    pub model: ModelSection,
    /// Largest `j` in the `lambda_k`, `k = (j, 0, ..)`, table.
    pub cutoff: usize,
    /// Cutoff of the Gaussian entropy partial sum.
    pub entropy_cutoff: usize,
    /// Constant `C` of the smallness diagnostic; unknown, reported only.
    pub smallness_constant: f64,
}

impl Default for TheoryCardConfig {
    fn default() -> Self {
        Self { model: ModelSection::default(), cutoff: 16, entropy_cutoff: 64, smallness_constant: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactAuditConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub times: Vec<f64>,
    pub log_sobolev_trials: usize,
    pub adjoint_tol: f64,
    pub yau_tol: f64,
}

impl Default for ExactAuditConfig {
    fn default() -> Self {
        Self {
            model: ModelSection { lambda: 0.3, n: 3, ..ModelSection::default() },
            seed: 1,
            times: vec![0.01, 0.05, 0.1, 0.5, 1.0, 2.0],
            log_sobolev_trials: 10_000,
            adjoint_tol: 1e-12,
            yau_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydroConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub times: Vec<f64>,
    /// Initial profile `rho* + amplitude cos(2 pi x_1)`.
    pub amplitude: f64,
    /// Largest accepted L2 error at the largest size and the last time.
    pub tolerance: f64,
}

impl Default for HydroConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            seed: 1,
            sizes: vec![128, 512],
            replicas: 20,
            times: vec![0.1, 0.5],
            amplitude: 0.2,
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydrostaticsConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub total_time: f64,
    pub sample_interval: f64,
    pub expected_slope: f64,
    pub slope_tolerance: f64,
}

impl Default for HydrostaticsConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            seed: 1,
            sizes: vec![64, 128, 256, 512],
            replicas: 8,
            total_time: 55.0,
            sample_interval: 0.02,
            expected_slope: -1.0,
            slope_tolerance: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub replicas: usize,
    /// Simulated time per replica, burn-in included.
    pub total_time: f64,
    pub sample_interval: f64,
    /// Largest Euclidean `|k|` tested; modes up to `|k|_inf <= cutoff` are recorded.
    pub cutoff: usize,
    /// Fraction of the tested modes that must lie within `sigmas` standard errors.
    pub pass_fraction: f64,
    pub sigmas: f64,
    /// Required aggregate z against the flat profile `chi(rho*)`.
    pub white_noise_z: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            seed: 1,
            replicas: 8,
            total_time: 2000.0,
            sample_interval: 0.01,
            cutoff: 16,
            pass_fraction: 15.0 / 16.0,
            sigmas: 3.0,
            white_noise_z: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocaleqConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub radius: usize,
    pub replicas: usize,
    pub total_time: f64,
    pub sample_interval: f64,
    /// Duration of one bootstrap block of consecutive configurations.
    pub block_time: f64,
    pub resamples: usize,
}

impl Default for LocaleqConfig {
    fn default() -> Self {
        Self {
            model: ModelSection { lambda: 0.3, ..ModelSection::default() },
            seed: 1,
            sizes: vec![256, 1024],
            radius: 1,
            replicas: 8,
            total_time: 25.0,
            sample_interval: 2e-4,
            block_time: 2.0,
            resamples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowAuditConfig {
    pub scales: Vec<usize>,
    pub dims: Vec<usize>,
    pub residual_tol: f64,
    pub max_spread: f64,
}

impl Default for FlowAuditConfig {
    fn default() -> Self {
        Self { scales: (2..=8).collect(), dims: vec![1, 2, 3], residual_tol: 1e-12, max_spread: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdeAuditConfig {
    pub model: ModelSection,
    pub seed: u64,
    pub cutoff: usize,
    pub samples: usize,
    pub lags: Vec<f64>,
    /// Random trigonometric polynomials for the integral identity.
    pub identity_functions: usize,
    pub sigmas: f64,
    pub identity_tol: f64,
}

impl Default for SpdeAuditConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            seed: 1,
            cutoff: 8,
            samples: 100_000,
            lags: vec![0.005, 0.02],
            identity_functions: 5,
            sigmas: 3.0,
            identity_tol: 1e-8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        for name in EXPERIMENTS {
            let cfg = ExperimentConfig::default_for(name).unwrap();
            assert_eq!(cfg.name(), name);
        }
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"clt-spectrum\"\nseed = 9\ntotal_time = 10.0\n[model]\nlambda = 0.5\nn = 64\n",
        )
        .unwrap();
        match &cfg {
            ExperimentConfig::CltSpectrum(c) => {
                assert_eq!(c.seed, 9);
                assert_eq!(c.model.n, 64);
                assert_eq!(c.model.a, 1.0);
                assert_eq!(c.replicas, 8);
            }
            _ => panic!("wrong variant"),
        }
        let back = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&back).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::from_toml("experiment = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"hydro\"\ntypo = 1").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"hydro\"\n[model]\na = -1.0").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"hydrostatics-scaling\"\nsizes = [64]").is_err());
    }
}
