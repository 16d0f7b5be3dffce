use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use lclab::experiments::{self, ExperimentRecord, SUBCOMMANDS};
use lclab::parallel;
use serde_json::Value;

/// Monte Carlo experiments for log-concave central limit theorems.
#[derive(Parser, Debug)]
#[command(name = "lclab", version)]
struct Cli {
    /// One of: sample, follmer, couple, stein-check, distance, rate-sweep, md-ratio, ineq-suite.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUBCOMMANDS))]
    subcommand: String,
    /// JSON config file (optional for ineq-suite).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append JSON-lines records here instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Also write CSV tables next to the output.
    #[arg(long)]
    csv: bool,
    /// Also write SVG plots next to the output.
    #[arg(long)]
    svg: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Value, Failure> {
    let Some(path) = &cli.config else {
        return if cli.subcommand == "ineq-suite" {
            Ok(Value::Null)
        } else {
            Err(Failure::Config(format!("{} requires --config", cli.subcommand)))
        };
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn side_path(out: Option<&Path>, name: &str, ext: &str) -> PathBuf {
    match out {
        Some(p) => {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
            p.with_file_name(format!("{stem}_{name}.{ext}"))
        }
        None => PathBuf::from(format!("{name}.{ext}")),
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    let config = load_config(cli)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let art = parallel::with_threads(cli.threads, || experiments::run(&cli.subcommand, &config, cli.seed)).map_err(|e| {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    })?;

    let mut lines = String::new();
    for row in art.rows {
        lines.push_str(&ExperimentRecord::new(&cli.subcommand, config.clone(), cli.seed, started_at.clone(), row).to_jsonl());
    }
    let io = |e: std::io::Error| Failure::Runtime(e.to_string());
    match &cli.out {
        Some(p) => fs::OpenOptions::new().create(true).append(true).open(p).and_then(|mut f| f.write_all(lines.as_bytes())).map_err(io)?,
        None => print!("{lines}"),
    }
    let out = cli.out.as_deref();
    if cli.csv {
        for (name, body) in &art.csv {
            fs::write(side_path(out, name, "csv"), body).map_err(io)?;
        }
    }
    if cli.svg {
        for (name, body) in &art.svg {
            fs::write(side_path(out, name, "svg"), body).map_err(io)?;
        }
    }
    Ok(())
}
