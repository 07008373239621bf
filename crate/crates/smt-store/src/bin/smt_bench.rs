//! Workload driver: seeds a key population, applies mixed traffic in
//! committed epochs, snapshots on a wall-clock period, and prints a
//! `key=value` report. Exits nonzero if the run or its built-in proof
//! spot-checks fail.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use smt_store::WorkloadConfig;

#[derive(Parser, Debug)]
#[command(name = "smt-bench", about = "Measured workload against the versioned store")]
struct Args {
    /// Size of the seeded key population
    #[arg(long, default_value_t = 1 << 14)]
    keys: u64,

    /// Operations applied after seeding
    #[arg(long, default_value_t = 1 << 18)]
    ops: u64,

    /// Percent puts,gets,deletes; must sum to 100
    #[arg(long, default_value = "90,5,5", value_parser = parse_mix)]
    mix: (u32, u32, u32),

    /// Value payload size in bytes
    #[arg(long, default_value_t = 128)]
    value_size: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// log2 of the shard count
    #[arg(long, default_value_t = 3)]
    shard_bits: u8,

    /// log2 of the subtrees per shard
    #[arg(long, default_value_t = 8)]
    subtree_bits: u8,

    /// Minimum milliseconds between snapshots; 0 disables periodic
    /// snapshots (a final one is always taken)
    #[arg(long, default_value_t = 0)]
    snapshot_period_ms: u64,

    /// Directory for snapshot files; kept in memory when omitted
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Write the report here as well as to stdout
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_mix(s: &str) -> Result<(u32, u32, u32), String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err("expected three comma-separated percentages".into());
    }
    if parts.iter().sum::<u32>() != 100 {
        return Err("mix percentages must sum to 100".into());
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = WorkloadConfig {
        keys: args.keys,
        ops: args.ops,
        mix: args.mix,
        value_size: args.value_size,
        seed: args.seed,
        shard_bits: args.shard_bits,
        subtree_bits: args.subtree_bits,
        snapshot_period_ms: args.snapshot_period_ms,
        snapshot_dir: args.snapshot_dir,
        threads: args.threads,
    };
    let report = match smt_store::bench::run(&config) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("run failed: {err}");
            return ExitCode::FAILURE;
        }
    };
    let text = report.render();
    print!("{text}");
    if let Some(path) = &args.report {
        if let Err(err) = std::fs::write(path, &text) {
            eprintln!("could not write report to {}: {err}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
