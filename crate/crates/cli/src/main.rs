use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rccap_cli::config::{parse_grid, ExperimentConfig, Model};
use rccap_cli::figure1;
use rccap_cli::gen::make_figure1_system;
use rccap_cli::suite::{run_property_suite, Scale};
use rccap_core::capacity::{self, BoundsOptions, EmpiricalOptions};
use rccap_core::{lincap, ArmaProcessSpec, StateSystem};
use serde_json::json;

/// Capacity analysis of linear and echo state reservoir systems.
#[derive(Parser)]
#[command(name = "rccap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity-versus-persistence sweep; writes figure1.csv.
    Figure1(Figure1Args),
    /// Empirical or analytic capacities of one system and input.
    Capacity(CapacityArgs),
    /// Theoretical capacity bounds for an input.
    Bounds(BoundsArgs),
    /// Reduced controllable system and its injection.
    Reduce(SystemArgs),
    /// Kalman controllability report and rank-based capacity.
    Rank(SystemArgs),
    /// Runs every property battery; exits 1 on failure.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Figure1Args {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau_max: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeatable; defaults to every model.
    #[arg(long, value_enum)]
    model: Vec<Model>,
    /// "0,0.1,0.5" or "start:stop:step".
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG chart per model.
    #[arg(long)]
    plot: bool,
    /// Plain per-lag estimates without the degrees-of-freedom correction.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct SystemArgs {
    /// System JSON document; otherwise a generated sweep system.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Singular value threshold for rank decisions.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    phi: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

impl InputArgs {
    /// With `--model`, `--phi` is the grid value mapped through the model.
    fn spec(&self) -> anyhow::Result<ArmaProcessSpec<f64>> {
        let (phi, theta) = match self.model {
            Some(m) => m.params(self.phi),
            None => (self.phi, self.theta),
        };
        Ok(ArmaProcessSpec::new(phi, theta, self.sigma)?)
    }
}

#[derive(Args)]
struct CapacityArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = capacity::DEFAULT_TAU_MAX)]
    tau_max: usize,
    #[arg(long, default_value_t = capacity::DEFAULT_LENGTH)]
    length: usize,
    /// Closed-form capacities (linear systems only).
    #[arg(long)]
    analytic: bool,
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 15)]
    n: usize,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, value_enum, default_value_t = Scale::Quick)]
    scale: Scale,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_system(args: &SystemArgs) -> anyhow::Result<StateSystem<f64>> {
    match &args.system {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(StateSystem::from_json(&text)?)
        }
        None => Ok(make_figure1_system(args.n, args.rho, args.seed)?.system.into()),
    }
}

fn load_linear(args: &SystemArgs) -> anyhow::Result<rccap_core::LinearSystem> {
    match load_system(args)?.as_linear() {
        Some(s) => Ok(s.clone()),
        None => bail!("this command needs a linear system"),
    }
}

fn figure1_config(args: &Figure1Args) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.rho {
        cfg.spectral_radius = v;
    }
    if let Some(v) = args.tau_max {
        cfg.tau_max = v;
    }
    if let Some(v) = args.length {
        cfg.length = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if !args.model.is_empty() {
        cfg.models = args.model.clone();
    }
    if let Some(g) = &args.grid {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if args.raw {
        cfg.debias = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Figure1(args) => {
            let cfg = figure1_config(&args)?;
            let (_, written) = figure1::run_figure1(&cfg, args.plot)?;
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Capacity(args) => {
            let spec = args.input.spec()?;
            let report = if args.analytic {
                let sys = load_linear(&args.system)?;
                lincap::analytic_capacities_linear(&sys, &spec.autocovariance(), args.tau_max, None)?
            } else {
                let sys = load_system(&args.system)?;
                let opts = EmpiricalOptions {
                    debias: !args.raw,
                    ..Default::default()
                };
                capacity::total_capacity_empirical(&sys, &spec, args.tau_max, args.length, args.system.seed, &opts)?
            };
            println!("{}", report.to_json());
        }
        Command::Bounds(args) => {
            let spec = args.input.spec()?;
            let bounds = capacity::theoretical_bounds(&spec.autocovariance(), args.n, &BoundsOptions::default())?;
            println!("{}", bounds.to_json());
        }
        Command::Reduce(args) => {
            let sys = load_linear(&args)?;
            let reduced = lincap::reduce_system(&sys, args.threshold);
            println!("{}", serde_json::to_string_pretty(&reduced.to_json())?);
        }
        Command::Rank(args) => {
            let sys = load_linear(&args)?;
            let report = lincap::controllability(&sys, args.threshold);
            let rank = lincap::memory_capacity_via_rank(&sys, args.threshold);
            let doc = json!({ "controllability": report.to_json(), "capacity": rank });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Selftest(args) => {
            let report = run_property_suite(args.seed, args.scale);
            for c in &report.checks {
                eprintln!(
                    "{} {}::{} ({:.1}s) {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.module,
                    c.name,
                    c.seconds,
                    c.detail
                );
            }
            match &args.out {
                Some(path) => std::fs::write(path, report.to_json())?,
                None => println!("{}", report.to_json()),
            }
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
