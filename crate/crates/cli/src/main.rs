use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sle_lab_cli::commands::{self, CommandOutput};
use sle_lab_cli::config::{Check, ConstraintKind, RunConfig};
use sle_lab_cli::{CliError, CliResult};

/// Verification campaigns for the special Lagrangian equation.
#[derive(Debug, Parser)]
#[command(name = "sle-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides `output.dir` and $SLE_LAB_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, value_parser = ["cone", "sigma2"])]
    constraint: Option<String>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid points per axis.
    #[arg(long, global = true)]
    points: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample admissible spectra and check the eigenvalue lemmas.
    SpectralFuzz {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Solve one Dirichlet problem with quadratic boundary data.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Generating spectrum, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        spectrum: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Solve a family and run the estimate and measure checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Restrict to these checks (repeatable).
        #[arg(long, value_enum)]
        check: Vec<Check>,
        /// Small radius of the doubling check.
        #[arg(long)]
        r: Option<f64>,
        /// Reuse the solutions directory of a previous sweep.
        #[arg(long)]
        solutions: Option<PathBuf>,
    },
    /// Solve a family and stream its estimate records.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize an estimate CSV per quantity.
    Report {
        #[command(flatten)]
        common: Common,
        /// Estimate CSV; defaults to `<out>/sweep/estimates.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn base_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = c.n {
        cfg.problem.dimension = n;
    }
    if let Some(k) = &c.constraint {
        cfg.problem.constraint = if k == "cone" { ConstraintKind::Cone } else { ConstraintKind::Sigma2 };
    }
    if c.eps.is_some() {
        cfg.problem.eps = c.eps;
    }
    if cfg.problem.constraint == ConstraintKind::Sigma2 && cfg.problem.eps.is_none() {
        return Err(CliError::Config("the sigma2 constraint needs eps".into()));
    }
    if let Some(s) = c.seed {
        cfg.fuzz.seed = s;
        cfg.family.seed = s;
    }
    if let Some(p) = c.points {
        cfg.grid.points = p;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<(CommandOutput, PathBuf)> {
    let (common, cfg) = match &cli.command {
        Command::SpectralFuzz { common, samples } => {
            let mut cfg = base_config(common)?;
            if let Some(s) = samples {
                cfg.fuzz.samples = *s;
            }
            (common, cfg)
        }
        Command::Solve { common, spectrum, theta, amplitude } => {
            let mut cfg = base_config(common)?;
            if spectrum.is_some() {
                cfg.problem.spectrum = spectrum.clone();
                cfg.problem.theta = None;
            }
            if theta.is_some() {
                cfg.problem.theta = *theta;
                if spectrum.is_none() {
                    cfg.problem.spectrum = None;
                }
            }
            if let Some(a) = amplitude {
                cfg.problem.amplitude = *a;
            }
            (common, cfg)
        }
        Command::Verify { common, check, r, solutions } => {
            let mut cfg = base_config(common)?;
            if !check.is_empty() {
                cfg.verify.checks = check.clone();
            }
            if let Some(r) = r {
                cfg.verify.r = *r;
            }
            if solutions.is_some() {
                cfg.verify.solutions = solutions.clone();
            }
            (common, cfg)
        }
        Command::Sweep { common } | Command::Report { common, .. } => (common, base_config(common)?),
    };
    cfg.validate()?;
    let root = cfg.output_root(common.out.as_deref());
    let out = match &cli.command {
        Command::SpectralFuzz { .. } => commands::spectral_fuzz(&cfg)?,
        Command::Solve { .. } => commands::solve(&cfg)?,
        Command::Verify { .. } => commands::verify(&cfg)?,
        Command::Sweep { .. } => commands::sweep(&cfg)?,
        Command::Report { input, .. } => {
            let input = input.clone().unwrap_or_else(|| root.join("sweep").join("estimates.csv"));
            commands::report(&cfg, &input)?
        }
    };
    Ok((out, root))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(|(out, root)| out.artifacts.write(&root).map(|files| (out, files))) {
        Ok((out, files)) => {
            println!("{}", out.message);
            for f in files {
                println!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("assertion failure");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
