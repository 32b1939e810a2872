//! Command-line front end. Exit codes: 0 success, 1 configuration error,
//! 2 runtime or I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{
    dominance_check, grid_oracle_k2, prob_oracle, single_best_oracle, DEFAULT_ORACLE_ITERS,
};

use super::config::{ExperimentConfig, OutputFormat};
use super::emit::{csv_string, emit, json_string};
use super::runner::run_experiment;
use super::HarnessError;

#[derive(Debug, Parser)]
#[command(
    name = "pasto",
    version,
    about = "Monte Carlo experiments for probabilistic parameter optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicas (overrides the config).
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all replicas and write the aggregated curves.
    Run { config: PathBuf },
    /// Print single-best and probabilistic optima for one replica's instance.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replica: usize,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Run once per value of one config field; each run gets its own directory.
    Sweep {
        config: PathBuf,
        /// Dotted path of the field, e.g. `algorithm.gamma`.
        #[arg(long)]
        param: String,
        /// Comma-separated JSON values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io(_) | HarnessError::Runtime(_) => 2,
        }
    }
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(r) = o.replicas {
        cfg.replicas = r;
    }
    if let Some(out) = &o.out {
        cfg.output = Some(out.clone());
    }
    if let Some(f) = o.format {
        cfg.format = f;
    }
    cfg.validate()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn run_one(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), HarnessError> {
    let bundle = run_experiment(cfg)?;
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    match &cfg.output {
        Some(dir) => {
            for path in emit(&bundle, cfg.format, dir)? {
                log::info!("wrote {}", path.display());
            }
        }
        None => match cfg.format {
            OutputFormat::Csv => out.write_all(csv_string(&bundle).as_bytes()).map_err(io)?,
            OutputFormat::Json => out.write_all(json_string(&bundle).as_bytes()).map_err(io)?,
            OutputFormat::Both => {
                return Err(HarnessError::Config(
                    "format `both` needs an output directory".into(),
                ))
            }
        },
    }
    Ok(())
}

fn oracle(cfg: &ExperimentConfig, replica: usize, out: &mut dyn Write) -> Result<(), HarnessError> {
    let setup = cfg.build_replica(replica)?;
    let mu = setup
        .env
        .ground_truth(1)
        .ok_or_else(|| HarnessError::Config("environment exposes no ground truth".into()))?;
    let obj = &setup.objective;
    let (arm, det) = single_best_oracle(&mu, obj)?;
    let dom = dominance_check(&mu, obj)?;
    let p = if obj.is_differentiable() {
        prob_oracle(&mu, obj, DEFAULT_ORACLE_ITERS)?.0
    } else {
        grid_oracle_k2(&mu, obj)?.0
    };
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    writeln!(out, "single_best arm={arm} value={det}").map_err(io)?;
    writeln!(
        out,
        "probabilistic value={} p={:?}",
        dom.prob_value,
        p.probs()
    )
    .map_err(io)?;
    writeln!(out, "dominance_gap={}", dom.gap).map_err(io)?;
    Ok(())
}

fn sweep_dir_name(param: &str, value: &str) -> String {
    let leaf = param.rsplit('.').next().unwrap_or(param);
    let clean: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{leaf}={clean}")
}

fn sweep(base: &ExperimentConfig, param: &str, values: &[String]) -> Result<(), HarnessError> {
    let root = base.output.clone().ok_or_else(|| {
        HarnessError::Config("sweep needs an output directory (--out or `output`)".into())
    })?;
    // parse everything first so a typo in the last value fails before any run
    let configs = values
        .iter()
        .map(|raw| {
            let value = serde_json::from_str(raw.trim())
                .unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
            let mut cfg = base.with_override(param, value)?;
            cfg.output = Some(root.join(sweep_dir_name(param, raw.trim())));
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    for cfg in &configs {
        run_one(cfg, &mut std::io::sink())?;
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Run { config } => run_one(&load(config, &cli.overrides)?, out),
        Command::Oracle { config, replica } => {
            oracle(&load(config, &cli.overrides)?, *replica, out)
        }
        Command::Validate { config } => {
            load(config, &cli.overrides)?;
            writeln!(out, "{}: ok", config.display()).map_err(|e| HarnessError::Io(e.to_string()))
        }
        Command::Sweep {
            config,
            param,
            values,
        } => sweep(&load(config, &cli.overrides)?, param, values),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
