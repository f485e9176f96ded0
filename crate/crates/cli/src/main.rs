//! Pipeline CLI: validate and convert workflow models, partition them
//! into subpaths, place subpaths onto a cluster, simulate the placed
//! deployment, refresh decisions from traces, and compare placement
//! policies.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or parse error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "beeflow", version, about = "Behavior tree workflow scheduling pipeline")]
struct Cli {
    /// Seed override for commands that sample.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Broker payload size limit in bytes.
    #[arg(long, global = true)]
    payload_limit: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    /// Promote subpaths by peak I/O contention contribution.
    IoContention,
    /// Promote the longest candidate path.
    LongestPath,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Single,
    CoRun,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FromArg {
    Dag,
    Fsm,
}

#[derive(Subcommand)]
enum Command {
    /// Check a workflow file against the model invariants.
    Validate { workflow: PathBuf },
    /// Convert a DAG or state-machine file into a workflow file.
    Convert {
        #[arg(long, value_enum)]
        from: FromArg,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a workflow into subpaths, optionally trace-informed.
    Partition {
        workflow: PathBuf,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "io-contention")]
        policy: PolicyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Place partitioned workflows onto a cluster.
    Place {
        #[arg(required = true)]
        partitions: Vec<PathBuf>,
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a placed scenario and write the report artifacts.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One batch refresh: re-estimate from traces, re-partition,
    /// re-place, simulate, and emit fresh synthetic traces.
    Refresh {
        scenario: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum, default_value = "io-contention")]
        policy: PolicyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare placement policies over the benchmark suite.
    Bench {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, default_value = "assets")]
        assets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match config::load(cli.seed, cli.payload_limit) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Validate { workflow } => commands::validate(&workflow, &config),
        Command::Convert { from, input, out } => commands::convert(from, &input, &out),
        Command::Partition { workflow, traces, policy, out } => {
            commands::partition(&workflow, traces.as_deref(), policy, &out, &config)
        }
        Command::Place { partitions, cluster, out } => {
            commands::place(&partitions, &cluster, &out)
        }
        Command::Simulate { scenario, mode, out } => {
            commands::simulate(&scenario, mode, &out, &config)
        }
        Command::Refresh { scenario, traces, policy, out } => {
            commands::refresh(&scenario, &traces, policy, &out, &config)
        }
        Command::Bench { suite, assets, out } => {
            commands::bench(&suite, &assets, &out, &config)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
