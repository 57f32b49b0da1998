mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use commands::Failure;

/// Cycle-level out-of-order RV32I core simulator.
#[derive(Parser)]
#[command(name = "ooosim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more programs.
    Run(RunArgs),
    /// Compare two sets of stats files run by run.
    Compare(CompareArgs),
    /// Embedded benchmark suite.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check a Kanata log for structural errors.
    ValidateTrace { path: PathBuf },
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["bench", "program", "binary"])))]
pub struct RunArgs {
    /// Embedded benchmark; repeat for several, or `all`.
    #[arg(long, value_name = "NAME")]
    pub bench: Vec<String>,
    /// ELF32 RISC-V executable.
    #[arg(long, value_name = "ELF")]
    pub program: Option<PathBuf>,
    /// Flat binary image, loaded at --base and started at --entry.
    #[arg(long, value_name = "FILE", requires_all = ["base", "entry"])]
    pub binary: Option<PathBuf>,
    #[arg(long, value_parser = parse_u32, requires = "binary")]
    pub base: Option<u32>,
    #[arg(long, value_parser = parse_u32, requires = "binary")]
    pub entry: Option<u32>,
    /// Configuration file; built-in defaults otherwise.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Write one JSON stats record per run (JSON Lines).
    #[arg(long, value_name = "FILE")]
    pub stats_out: Option<PathBuf>,
    /// Kanata pipeline log (single program only).
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
    /// Only trace instructions fetched in cycles FROM..TO.
    #[arg(long, value_name = "FROM:TO", value_parser = parse_window, requires = "trace_out")]
    pub trace_window: Option<(u64, u64)>,
    /// Skip lockstep checking against the functional reference.
    #[arg(long)]
    pub no_cosim: bool,
    #[arg(long, value_name = "N")]
    pub max_cycles: Option<u64>,
    /// Worker threads for several benchmarks.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Stats files for side A.
    #[arg(long = "a", value_name = "FILE", num_args = 1.., required = true)]
    pub a: Vec<PathBuf>,
    /// Stats files for side B.
    #[arg(long = "b", value_name = "FILE", num_args = 1.., required = true)]
    pub b: Vec<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Print the embedded benchmark names.
    List {
        /// Include a one-line description.
        #[arg(long)]
        long: bool,
    },
    /// Write a benchmark as a flat binary and print its base and entry.
    Export {
        name: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let t = s.replace('_', "");
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => t.parse(),
    }
    .map_err(|e| format!("{s:?}: {e}"))
}

fn parse_window(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(':').ok_or("expected FROM:TO")?;
    let from: u64 = a.parse().map_err(|_| format!("bad cycle {a:?}"))?;
    let to: u64 = b.parse().map_err(|_| format!("bad cycle {b:?}"))?;
    if to <= from {
        return Err("window is empty".into());
    }
    Ok((from, to))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Bench(BenchCommand::List { long }) => commands::bench_list(long),
        Command::Bench(BenchCommand::Export { name, out }) => commands::bench_export(&name, &out),
        Command::ValidateTrace { path } => commands::validate_trace(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure {
            code,
            kind,
            message,
        }) => {
            eprintln!("ooosim: {kind}: {message}");
            ExitCode::from(code)
        }
    }
}
