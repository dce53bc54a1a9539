//! `pco`: experiment runner for the PCO estimator.
//!
//! Every experiment is driven by one TOML config; command-line flags override
//! individual keys. Exit status: 0 on success, 2 on configuration errors,
//! 3 on numeric failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{exit_code, Run};
use config::{Command, ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "pco", version, about = "Penalized comparison to overfitting in the sequence model")]
struct Cli {
    /// Print the full default config (every key) and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Run the command named in a config file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Select a model for a saved observation file.
    Estimate(Overrides),
    /// Draw a Besov-ball signal and observations of it.
    Simulate(Overrides),
    /// Monte Carlo risk over an epsilon grid and the log-log slope.
    Rates(Overrides),
    /// Empirical tail frequencies of the concentration band.
    Concentration(Overrides),
    /// Haar-wavelet PCO regression on a named function or a response file.
    Regress(Overrides),
    /// Fit the band constants and write a moments table.
    Calibrate(Overrides),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Base config; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated epsilon grid for `rates`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Comma-separated strategies: H, I, S, flat, threshold:<t>.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    moments_file: Option<PathBuf>,
    /// Observation CSV (`estimate`) or response CSV (`regress`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "J")]
    top_level: Option<i32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    function: Option<String>,
    /// Comma-separated block sizes.
    #[arg(long = "D", value_delimiter = ',')]
    block_sizes: Option<Vec<usize>>,
    /// Comma-separated x grid.
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
}

impl Overrides {
    fn apply(self, c: &mut ExperimentConfig) {
        let cmd = c.command;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.p {
            c.penalty.p = v;
        }
        if let Some(v) = self.epsilon {
            c.noise.epsilon = v;
        }
        if let Some(v) = self.epsilons {
            c.sweep.epsilons = v;
        }
        if let Some(v) = self.strategies {
            c.penalty.strategies = v;
        }
        if let Some(v) = self.distribution {
            c.noise.distribution = v;
        }
        if let Some(v) = self.replicates {
            match cmd {
                Command::Concentration => c.concentration.replicates = v,
                Command::Calibrate => c.calibrate.replicates = v,
                _ => c.sweep.replicates = v,
            }
        }
        if let Some(v) = self.out_dir {
            c.io.out_dir = v;
        }
        if let Some(v) = self.moments_file {
            c.penalty.moments_file = Some(v);
        }
        if let Some(v) = self.input {
            match cmd {
                Command::Regress => c.regression.input = Some(v),
                _ => c.io.observations = Some(v),
            }
        }
        if let Some(v) = self.kind {
            c.signal.kind = v;
        }
        if let Some(v) = self.sigma {
            c.regression.sigma = v;
        }
        if let Some(v) = self.top_level {
            match cmd {
                Command::Regress => c.regression.top_level = Some(v),
                _ => c.signal.top_level = Some(v),
            }
        }
        if let Some(v) = self.n {
            c.regression.n = v;
        }
        if let Some(v) = self.basis {
            c.regression.basis = v;
        }
        if let Some(v) = self.function {
            c.regression.function = v;
        }
        if let Some(v) = self.block_sizes {
            match cmd {
                Command::Calibrate => c.calibrate.block_sizes = v,
                _ => c.concentration.block_sizes = v,
            }
        }
        if let Some(v) = self.x {
            match cmd {
                Command::Calibrate => c.calibrate.x = v,
                _ => c.concentration.x = v,
            }
        }
    }
}

fn build(sub: Sub) -> Result<ExperimentConfig, ConfigError> {
    let (command, base, overrides) = match sub {
        Sub::Run { file, overrides } => (None, Some(file), overrides),
        Sub::Estimate(o) => (Some(Command::Estimate), None, o),
        Sub::Simulate(o) => (Some(Command::Simulate), None, o),
        Sub::Rates(o) => (Some(Command::Rates), None, o),
        Sub::Concentration(o) => (Some(Command::Concentration), None, o),
        Sub::Regress(o) => (Some(Command::Regress), None, o),
        Sub::Calibrate(o) => (Some(Command::Calibrate), None, o),
    };
    let path = base.or_else(|| overrides.config.clone());
    let mut config = match &path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(cmd) = command {
        config.command = cmd;
    }
    overrides.apply(&mut config);
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", ExperimentConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(sub) = cli.command else {
        eprintln!("error: no command given; try `pco --help`");
        return ExitCode::from(2);
    };
    let result = build(sub)
        .and_then(Run::new)
        .map_err(anyhow::Error::from)
        .and_then(|run| run.execute());
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
