//! Experiment driver for the robust phase retrieval solver.
//!
//! Exit codes: 0 success, 1 check or assertion failure, 2 usage or
//! configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;

use commands::CliError;
use config::Config;

const USAGE: &str = "\
usage: robust-phase <generate|run|sweep|landscape|verify> [flags]

flags:
  --config PATH        key=value experiment configuration
  --out DIR            output directory (default .)
  --seed LIST          comma-separated seed override
  --parallelism INT    sweep worker count
  --quiet              suppress progress output

The ROBUST_PHASE_THREADS environment variable overrides parallelism.";

struct Args {
    command: String,
    config: Option<PathBuf>,
    out: PathBuf,
    seeds: Option<Vec<u64>>,
    parallelism: Option<usize>,
    quiet: bool,
}

fn parse_args(mut argv: std::env::Args) -> Result<Args, CliError> {
    argv.next(); // program name
    let command = argv.next().ok_or_else(|| CliError::usage(USAGE))?;
    let mut args = Args {
        command,
        config: None,
        out: PathBuf::from("."),
        seeds: None,
        parallelism: None,
        quiet: false,
    };
    while let Some(flag) = argv.next() {
        let mut value_for = |flag: &str| {
            argv.next()
                .ok_or_else(|| CliError::usage(format!("{flag} needs a value")))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value_for("--config")?)),
            "--out" => args.out = PathBuf::from(value_for("--out")?),
            "--seed" => {
                let list = value_for("--seed")?;
                let seeds: Result<Vec<u64>, _> =
                    list.split(',').map(|tok| tok.trim().parse()).collect();
                args.seeds =
                    Some(seeds.map_err(|e| CliError::usage(format!("bad --seed list: {e}")))?);
            }
            "--parallelism" => {
                let value = value_for("--parallelism")?;
                args.parallelism = Some(
                    value
                        .parse()
                        .map_err(|e| CliError::usage(format!("bad --parallelism: {e}")))?,
                );
            }
            "--quiet" => args.quiet = true,
            other => return Err(CliError::usage(format!("unknown flag {other:?}\n{USAGE}"))),
        }
    }
    Ok(args)
}

fn load_config(args: &Args) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            Config::parse(&text).map_err(CliError::usage)?
        }
        None => Config::default(),
    };
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn dispatch(args: Args) -> Result<(), CliError> {
    let needs_config = matches!(
        args.command.as_str(),
        "generate" | "run" | "sweep" | "landscape"
    );
    if needs_config && args.config.is_none() {
        return Err(CliError::usage(format!(
            "{} needs --config PATH\n{USAGE}",
            args.command
        )));
    }
    let cfg = load_config(&args)?;
    let out = cfg.out.clone().unwrap_or_else(|| args.out.clone());
    match args.command.as_str() {
        "generate" => commands::cmd_generate(&cfg, &out, args.quiet),
        "run" => commands::cmd_run(&cfg, &out, args.quiet),
        "sweep" => commands::cmd_sweep(&cfg, &out, args.parallelism, args.quiet),
        "landscape" => commands::cmd_landscape(&cfg, &out, args.quiet),
        "verify" => commands::cmd_verify(&cfg),
        other => Err(CliError::usage(format!(
            "unknown command {other:?}\n{USAGE}"
        ))),
    }
}

fn main() -> ExitCode {
    match parse_args(std::env::args()).and_then(dispatch) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}
