use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use symmix::{BandwidthRule, KernelFamily};
use symmix_cli::commands;
use symmix_cli::config::{
    load, parse_bandwidth, parse_point, parse_scenarios, DensityRunConfig, EstimatorConfig, FitConfig,
    SimulateConfig, StudyConfig,
};
use symmix_cli::io::resolve_out_dir;
use symmix_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "symmix", version, about = "Semiparametric two-component mixture of regressions")]
struct Cli {
    /// Output directory [default: $SYMMIX_OUT_DIR, else the current directory]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one dataset from a simulation scenario
    Simulate(SimulateArgs),
    /// Estimate (pi, a, b) along a grid of testing points
    Fit(FitArgs),
    /// Recover the local error density from a previous fit
    Density(DensityArgs),
    /// Replicated simulation study with RASE tables
    Study(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// G, T or L
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Nearest-neighbor fraction for the initialization bandwidths
    #[arg(long)]
    frac: Option<f64>,
    /// Initial mixing proportion
    #[arg(long)]
    pi_bar: Option<f64>,
    /// local, fixed:H, rate:C or rate:C:ALPHA
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<BandwidthRule>,
    /// Monte-Carlo frequency nodes [default: sample size]
    #[arg(long)]
    n_mc: Option<usize>,
    /// gaussian, epanechnikov or uniform
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// Restrict pi to [0.05, 0.45]
    #[arg(long)]
    strict_theta: bool,
}

impl EstimatorArgs {
    fn apply(self, cfg: &mut EstimatorConfig) {
        if let Some(v) = self.frac {
            cfg.frac = v;
        }
        if let Some(v) = self.pi_bar {
            cfg.pi_bar = v;
        }
        if let Some(v) = self.bandwidth {
            cfg.bandwidth = v;
        }
        if let Some(v) = self.n_mc {
            cfg.n_mc = Some(v);
        }
        if let Some(v) = self.kernel {
            cfg.kernel = v;
        }
        if self.strict_theta {
            cfg.strict_theta = true;
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with header; last column is the response
    #[arg(long)]
    input: Option<PathBuf>,
    /// Testing grid LO:HI:K
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    pi_lo: Option<f64>,
    #[arg(long)]
    pi_hi: Option<f64>,
    #[arg(long)]
    loc_lo: Option<f64>,
    #[arg(long)]
    loc_hi: Option<f64>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset the fit was computed on
    #[arg(long)]
    input: Option<PathBuf>,
    /// fit.json from a previous `fit`
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Target point, comma-separated coordinates; repeat for several
    #[arg(long, value_parser = parse_point)]
    x0: Vec<Vec<f64>>,
    /// Frequency taper bandwidth [default: rule of thumb]
    #[arg(long)]
    h1: Option<f64>,
    /// Design bandwidth [default: the fit's local bandwidth]
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long)]
    n_y: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `all` or a comma-separated list
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Replications per (scenario, n)
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    /// Testing points x_k = k/K
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        init_threads(t)?;
    }
    let out = resolve_out_dir(cli.out_dir);
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg: SimulateConfig = load(a.config.as_deref())?;
            if let Some(v) = a.scenario {
                cfg.scenario = v;
            }
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            report(&commands::simulate(&cfg, &out)?);
        }
        Command::Fit(a) => {
            let mut cfg: FitConfig = load(a.config.as_deref())?;
            if let Some(v) = a.input {
                cfg.input = Some(v);
            }
            if let Some(v) = a.grid {
                cfg.grid = Some(v);
                cfg.grid_points = None;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            a.estimator.apply(&mut cfg.estimator);
            let b = &mut cfg.bounds;
            b.pi_lo = a.pi_lo.or(b.pi_lo);
            b.pi_hi = a.pi_hi.or(b.pi_hi);
            b.loc_lo = a.loc_lo.or(b.loc_lo);
            b.loc_hi = a.loc_hi.or(b.loc_hi);
            report(&commands::fit(&cfg, &out)?);
        }
        Command::Density(a) => {
            let mut cfg: DensityRunConfig = load(a.config.as_deref())?;
            if let Some(v) = a.input {
                cfg.input = Some(v);
            }
            if let Some(v) = a.fit {
                cfg.fit = Some(v);
            }
            if !a.x0.is_empty() {
                cfg.x0 = a.x0;
            }
            cfg.h1 = a.h1.or(cfg.h1);
            cfg.h2 = a.h2.or(cfg.h2);
            if let Some(v) = a.n_y {
                cfg.n_y = v;
            }
            if let Some(v) = a.n_u {
                cfg.n_u = v;
            }
            report(&commands::density(&cfg, &out)?);
        }
        Command::Study(a) => {
            let mut cfg: StudyConfig = load(a.config.as_deref())?;
            if let Some(v) = a.scenario {
                cfg.scenarios = parse_scenarios(&v);
            }
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.m {
                cfg.m = v;
            }
            if let Some(v) = a.k {
                cfg.k = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            a.estimator.apply(&mut cfg.estimator);
            let (files, wall) = commands::study(&cfg, &out)?;
            report(&files);
            eprintln!("study finished in {wall:.1} s");
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn init_threads(t: usize) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_: usize) -> CliResult<()> {
    eprintln!("note: built without the parallel feature; --threads ignored");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
