//! Batch front end for qmetro: config ingestion, subcommand dispatch and
//! deterministic result files.
//!
//! Every run writes a JSON envelope (tool version, resolved config, payload)
//! plus CSV tables into `--out`. Exit codes: 0 success, 2 config error,
//! 1 runtime failure.

pub mod commands;
pub mod config;
pub mod emit;

use std::convert::Infallible;
use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ChannelSpec, PriorSpec, StrategySpec};
use crate::emit::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{0}")]
    Runtime(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

impl From<qmetro::Error> for CliError {
    fn from(e: qmetro::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl FromStr for ChannelSpec {
    type Err = Infallible;
    fn from_str(s: &str) -> Result<Self, Infallible> {
        Ok(ChannelSpec::Name(s.to_string()))
    }
}

impl FromStr for PriorSpec {
    type Err = Infallible;
    fn from_str(s: &str) -> Result<Self, Infallible> {
        Ok(PriorSpec::Text(s.to_string()))
    }
}

impl FromStr for StrategySpec {
    type Err = Infallible;
    fn from_str(s: &str) -> Result<Self, Infallible> {
        Ok(StrategySpec::Name(s.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "qmetro", version, about = "Mutual-information analysis of quantum metrology strategies")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with the subcommand's keys; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "all")]
    pub format: Format,
    /// Worker threads (default: machine parallelism)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Store wall time in the result file (otherwise it goes to stderr)
    #[arg(long, global = true)]
    pub record_wall_time: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mutual information of a given strategy
    MiEval(MiEvalOpts),
    /// Maximize mutual information over initial states and rank-one POVMs
    Optimize(OptimizeOpts),
    /// Quantum-classical parallel strategy: outcome laws and MI
    Qcp(QcpOpts),
    /// Repeated estimation and the variance bridge
    Bridge(BridgeOpts),
    /// Scaling of MI or Δφ with the number of probes
    Scaling(ScalingOpts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QcpMode {
    Closed,
    Adaptive,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    Mi,
    Variance,
}

macro_rules! opts {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $key:literal $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[arg(long = $key)]
                #[serde(rename = $key, default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Flags in `self` win over keys in `file`.
            pub fn merged(self, file: $name) -> $name {
                $name { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

opts!(MiEvalOpts {
    /// Preset (qubit-phase, equal-ladder(d), identity(d)) or TOML file
    "channel" channel: ChannelSpec,
    /// uniform:a:b, discrete:φ1,φ2:w1,w2, or TOML file
    "prior" prior: PriorSpec,
    /// Number of probes
    "N" probes: usize,
    /// ghz:β, random:M, or TOML file with state and POVM
    "strategy" strategy: StrategySpec,
    "seed" seed: u64,
    /// Quadrature nodes per period
    "resolution" resolution: usize,
});

opts!(OptimizeOpts {
    "channel" channel: ChannelSpec,
    "prior" prior: PriorSpec,
    "N" probes: usize,
    /// Number of POVM outcomes (≥ d^N)
    "M" outcomes: usize,
    "restarts" restarts: usize,
    "seed" seed: u64,
    "tol" tol: f64,
    "max-iters" max_iters: usize,
    "resolution" resolution: usize,
});

opts!(QcpOpts {
    /// Number of groups; N = 2^L − 1
    "L" groups: usize,
    /// Spectrum width
    "W" width: f64,
    /// Default: uniform over one period 2π/W
    "prior" prior: PriorSpec,
    "mode" mode: QcpMode,
    "shots" shots: u64,
    "seed" seed: u64,
    /// Phases for the p(m|φ) table, comma separated (radians)
    "phi" phi: String,
    /// Number of phases for the table when --phi is absent
    "grid" grid: usize,
    "resolution" resolution: usize,
});

opts!(BridgeOpts {
    /// qcp, ghz:β, random:M, or TOML strategy file
    "strategy" strategy: StrategySpec,
    /// Channel for non-QCP strategies
    "channel" channel: ChannelSpec,
    /// Probes for non-QCP strategies
    "N" probes: usize,
    "L" groups: usize,
    "W" width: f64,
    /// Data points per estimate
    "s" s: usize,
    /// Estimates per averaged estimate
    "r" r: usize,
    "trials" trials: usize,
    /// Uniform prior window a:b (radians)
    "prior-window" prior_window: String,
    "seed" seed: u64,
    /// Write every single estimate to samples.csv
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    "persist-samples" persist_samples: bool,
    /// Accept prior windows wider than π/W
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    "allow-wide-window" allow_wide_window: bool,
    /// ε of the asymptotic bound
    "epsilon" epsilon: f64,
    /// Scaling exponent α in the bound
    "alpha" alpha: f64,
    /// Histogram bin width for φ̃ − φ (default: smallest nonzero σ / 4)
    "bin-width" bin_width: f64,
    "resolution" resolution: usize,
});

opts!(ScalingOpts {
    /// Inclusive range of L, a:b
    "L-range" l_range: String,
    "mode" mode: ScalingMode,
    "W" width: f64,
    "prior" prior: PriorSpec,
    "s" s: usize,
    "r" r: usize,
    "trials" trials: usize,
    "prior-window" prior_window: String,
    "seed" seed: u64,
    "resolution" resolution: usize,
});

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::MiEval(_) => "mi-eval",
            Command::Optimize(_) => "optimize",
            Command::Qcp(_) => "qcp",
            Command::Bridge(_) => "bridge",
            Command::Scaling(_) => "scaling",
        }
    }
}

fn file_opts<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => config::load_toml(p, "config"),
        None => Ok(T::default()),
    }
}

fn dispatch(cli: Cli, started: Instant) -> Result<Vec<PathBuf>, CliError> {
    let common = &cli.common;
    let mut out = emit::Writer::new(&common.out)?;
    let ctx = commands::Ctx {
        format: common.format,
        wall: common.record_wall_time.then_some(started),
    };
    let name = cli.command.name();
    match cli.command {
        Command::MiEval(o) => commands::mi_eval(o.merged(file_opts(&common.config)?), name, &ctx, &mut out)?,
        Command::Optimize(o) => commands::optimize(o.merged(file_opts(&common.config)?), name, &ctx, &mut out)?,
        Command::Qcp(o) => commands::qcp(o.merged(file_opts(&common.config)?), name, &ctx, &mut out)?,
        Command::Bridge(o) => commands::bridge(o.merged(file_opts(&common.config)?), name, &ctx, &mut out)?,
        Command::Scaling(o) => commands::scaling(o.merged(file_opts(&common.config)?), name, &ctx, &mut out)?,
    }
    Ok(out.written)
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started = Instant::now();
    let record = cli.common.record_wall_time;
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli, started)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            if !record {
                eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
