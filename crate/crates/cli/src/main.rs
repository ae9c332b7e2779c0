use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdness::config::{ExperimentConfig, EXPERIMENTS};
use rdness::exact::ExactModel;
use rdness::experiments::run_experiment;
use rdness::fields::spectrum_estimate;
use rdness::simulate::{run, Observables, SimConfig};
use rdness::theory::{ModelParams, TheoryCard};

#[derive(Parser)]
#[command(name = "rdness", version, about = "Simulator and verifiers for the reaction-diffusion exclusion process")]
struct Cli {
    /// Seed; overrides the one in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV/JSON outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Model {
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 256)]
    n: usize,
}

impl Model {
    fn params(&self) -> rdness::Result<ModelParams> {
        ModelParams::new(self.a, self.b, self.lambda, self.d, self.n)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameter card: rho*, chi, F'(rho*), kappa and lambda_k.
    Theory {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 16)]
        cutoff: usize,
    },
    /// Run replicas of the particle system and write per-replica sample CSVs.
    Simulate {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 100.0)]
        total_time: f64,
        #[arg(long, default_value_t = 0.01)]
        interval: f64,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Burn-in; defaults to 10 / |F'(rho*)|.
        #[arg(long)]
        burn_in: Option<f64>,
        /// Record Fourier modes up to this cutoff and write spectrum.csv.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Exact finite-state audit on a small torus (at most 12 sites).
    Exact {
        #[command(flatten)]
        model: Model,
    },
    /// Run a named experiment pipeline and write its artifacts and manifest.
    Experiment {
        /// One of the experiment names.
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
        name: String,
        /// TOML config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when an assertion gate failed.
fn dispatch(cli: &Cli) -> rdness::Result<bool> {
    match &cli.command {
        Command::Theory { model, cutoff } => {
            let card = TheoryCard::new(&model.params()?, *cutoff)?;
            println!("{}", serde_json::to_string_pretty(&card)?);
            Ok(true)
        }
        Command::Simulate { model, total_time, interval, replicas, burn_in, modes } => {
            let p = model.params()?;
            let mut cfg = SimConfig::new(p, cli.seed.unwrap_or(1), *interval, *total_time, *replicas);
            if let Some(b) = burn_in {
                cfg.burn_in = *b;
            }
            cfg.observables = Observables { mode_cutoff: *modes, ..Default::default() };
            let streams = run(&cfg)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            for s in &streams {
                std::fs::write(cli.out_dir.join(format!("samples_r{}.csv", s.replica)), s.to_csv())?;
            }
            if modes.is_some() {
                let series: Vec<_> = streams.iter().filter_map(|s| s.modes.as_ref()).collect();
                let est = spectrum_estimate(&series)?.with_theory(&p)?;
                std::fs::write(cli.out_dir.join("spectrum.csv"), est.to_csv())?;
            }
            let events: u64 = streams.iter().map(|s| s.events.total()).sum();
            println!("{} replicas, {events} events, outputs in {}", streams.len(), cli.out_dir.display());
            Ok(true)
        }
        Command::Exact { model } => {
            let m = ExactModel::new(model.params()?)?;
            let report = serde_json::json!({
                "states": m.states(),
                "rho_star": m.rho_star(),
                "adjoint": m.adjoint_residual(),
                "stationary_residual": m.stationary()?.residual,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
        Command::Experiment { name, config } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default_for(name)?,
            };
            if cfg.name() != name {
                return Err(rdness::Error::Config(format!("config is for `{}`, not `{name}`", cfg.name())));
            }
            if let Some(seed) = cli.seed {
                cfg.set_seed(seed);
            }
            let manifest = run_experiment(&cfg, &cli.out_dir)?;
            for g in &manifest.gates {
                println!("{} {}: {}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.detail);
            }
            println!("manifest: {}", cli.out_dir.join("manifest.json").display());
            Ok(manifest.passed)
        }
    }
}
