// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fxdiff_cli::commands::*;
use fxdiff_cli::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "fxdiff",
    version,
    about = "Fixed-time differentiator experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Without it the reference setup is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and sampling scans.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    t_final: Option<f64>,
    /// Convergence threshold on |e|.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its trajectory.
    Simulate,
    /// Sweep initial conditions and tabulate convergence times.
    SweepIc {
        /// Also certify the design and report its fixed-time bound.
        #[arg(long)]
        with_bound: bool,
    },
    /// Sweep noise amplitudes and fit accuracy exponents.
    SweepNoise,
    /// Check the Lyapunov exponents, scan W* and compute the fixed-time bound.
    Certify,
    /// Synthesize a gain ladder.
    SynthGains,
    /// Probe ultimate boundedness and vanishing-input behavior under noise.
    IssProbe,
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = common.dt {
        cfg.simulation.dt = dt;
    }
    if let Some(t) = common.t_final {
        cfg.simulation.t_final = t;
    }
    if let Some(th) = common.threshold {
        cfg.simulation.threshold = th;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, HarnessError> {
    if let Some(workers) = cli.common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .map_err(|e| HarnessError::Validation(format!("--workers: {e}")))?;
    }
    let cfg = load(&cli.common)?;
    let dir = cfg.output.dir.clone();
    match cli.command {
        Command::Simulate => write_simulate(&run_simulate(&cfg)?, &dir),
        Command::SweepIc { with_bound } => write_sweep_ic(&run_sweep_ic(&cfg, with_bound)?, &dir),
        Command::SweepNoise => write_sweep_noise(&run_sweep_noise(&cfg)?, &dir),
        Command::Certify => match run_certify(&cfg) {
            Ok(r) => write_certify(&r, &dir),
            Err(e) => {
                if !matches!(e, HarnessError::Validation(_)) {
                    write_certify_failure(&e, &cfg.digest(), &dir)?;
                }
                Err(e)
            }
        },
        Command::SynthGains => write_synth_gains(&run_synth_gains(&cfg)?, &cfg, &dir),
        Command::IssProbe => {
            let r = run_iss_probe(&cfg)?;
            let files = write_iss_probe(&r, &dir)?;
            if r.bounded_ok && r.vanishing_ok {
                Ok(files)
            } else {
                Err(HarnessError::Convergence(format!(
                    "ISS probe: boundedness {}, vanishing-input {}",
                    r.bounded_ok, r.vanishing_ok
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fxdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
