//! Command-line front end.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::driver::{solve, Config, RunStatus, Variant};
use crate::fragments::{enumerate_fragments, fragments_to_json, DEFAULT_ENUMERATION_CAP};
use crate::instance::{generate_instance, oracle_optimum, parse_instance, Format, Instance};
use crate::ren::{build_network, Discretization};

/// Largest instance the brute-force oracle accepts.
pub const ORACLE_MAX_PAIRS: usize = 6;

#[derive(Debug, Parser)]
#[command(name = "fragsolve", version, about = "Exact pickup and delivery routing with time windows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// JSON if the input starts with `{`, benchmark text otherwise.
    Auto,
    Benchmark,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance to optimality.
    Solve {
        /// Instance file, or `-` for standard input.
        file: PathBuf,
        #[arg(long, default_value = "DFC")]
        variant: Variant,
        #[arg(long, value_enum, default_value = "auto")]
        format: InputFormat,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Also write the report to this file.
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Brute-force optimum (small instances only).
    Oracle {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: InputFormat,
    },
    /// Dump the enumerated fragments.
    Fragments {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: InputFormat,
        /// Write the minimal network in Graphviz format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print a random instance in canonical JSON.
    Gen {
        #[arg(long)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_instance(file: &PathBuf, format: InputFormat) -> Result<Instance, String> {
    let text = if file.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| format!("reading standard input: {e}"))?;
        s
    } else {
        std::fs::read_to_string(file).map_err(|e| format!("reading {}: {e}", file.display()))?
    };
    let format = match format {
        InputFormat::Json => Format::CanonicalJson,
        InputFormat::Benchmark => Format::BenchmarkText,
        InputFormat::Auto if text.trim_start().starts_with('{') => Format::CanonicalJson,
        InputFormat::Auto => Format::BenchmarkText,
    };
    parse_instance(&text, format).map_err(|e| e.to_string())
}

/// Runs one command, writing results to `out`; returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    match cli.command {
        Command::Solve {
            file,
            variant,
            format,
            time_limit,
            json_out,
            seed,
            threads,
        } => {
            let inst = read_instance(&file, format)?;
            let config = Config {
                variant,
                time_limit: time_limit.map(Duration::from_secs_f64),
                seed,
                threads,
                ..Config::default()
            };
            let report = solve(&inst, &config).map_err(|e| e.to_string())?;
            let json = report.to_json();
            writeln!(out, "{json}").map_err(io)?;
            if let Some(path) = json_out {
                std::fs::write(&path, &json).map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            Ok(match report.status {
                RunStatus::Optimal | RunStatus::Infeasible => 0,
                RunStatus::TimeLimit => 2,
            })
        }
        Command::Oracle { file, format } => {
            let inst = read_instance(&file, format)?;
            match oracle_optimum(&inst, ORACLE_MAX_PAIRS).map_err(|e| e.to_string())? {
                None => writeln!(out, "infeasible").map_err(io)?,
                Some(sol) => {
                    writeln!(out, "optimum {:.2}, vehicles {}", sol.cost, sol.vehicles).map_err(io)?;
                    for r in &sol.routes {
                        writeln!(out, "route {:?} cost {:.2}", r.path, r.cost).map_err(io)?;
                    }
                }
            }
            Ok(0)
        }
        Command::Fragments { file, format, dot } => {
            let inst = read_instance(&file, format)?;
            let set = enumerate_fragments(&inst, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
            writeln!(out, "{}", fragments_to_json(&inst, &set)).map_err(io)?;
            if let Some(path) = dot {
                let net = build_network(&inst, &set, Discretization::Minimal, &BTreeMap::new())
                    .map_err(|e| e.to_string())?;
                std::fs::write(&path, net.to_dot()).map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            Ok(0)
        }
        Command::Gen { pairs, seed } => {
            if pairs == 0 || pairs > 60 {
                return Err(format!("--pairs must be between 1 and 60, got {pairs}"));
            }
            writeln!(out, "{}", generate_instance(pairs, seed).to_canonical_json()).map_err(io)?;
            Ok(0)
        }
    }
}

/// Sets up logging from `FRAGSOLVE_LOG` (off, info or trace).
pub fn init_logging() {
    let level = match std::env::var("FRAGSOLVE_LOG").as_deref() {
        Ok("info") => log::LevelFilter::Info,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Off,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging();
    match execute(cli, &mut std::io::stdout().lock()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
