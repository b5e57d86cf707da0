//! `resonance`: tongue scans, cycles, shrinking points and their unfolding.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use failure::Failure;
use output::Output;

#[derive(Parser)]
#[command(name = "resonance", version, about = "Resonance tongues and shrinking points of piecewise-smooth maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid scan of the eventual period of the origin's forward orbit
    Scan(Common),
    /// Periodic orbit for a given word
    Cycle(Common),
    /// Locate a shrinking point in a search box
    Shrink(Common),
    /// Boundary and saddle-node curves near a shrinking point for mu > 0
    Unfold(Common),
    /// Randomized property suites
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// override the bifurcation parameter
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let (name, common) = match &cli.command {
        Command::Scan(c) => ("scan", c),
        Command::Cycle(c) => ("cycle", c),
        Command::Shrink(c) => ("shrink", c),
        Command::Unfold(c) => ("unfold", c),
        Command::Verify(c) => ("verify", c),
    };
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    if let Some(mu) = common.mu {
        if !mu.is_finite() {
            return Err(Failure::config("--mu must be finite"));
        }
    }
    let (config, raw) = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None if name == "verify" => RunConfig::parse("{}")?,
        None => return Err(Failure::config(format!("`{name}` needs --config"))),
    };
    let overrides = match common.mu {
        Some(mu) => serde_json::json!({ "mu": mu }),
        None => serde_json::json!({}),
    };
    let out = Output::new(&common.out, name, raw, overrides)?;
    let ctx = Context { config, mu: common.mu, out };
    match cli.command {
        Command::Scan(_) => commands::cmd_scan(&ctx),
        Command::Cycle(_) => commands::cmd_cycle(&ctx),
        Command::Shrink(_) => commands::cmd_shrink(&ctx),
        Command::Unfold(_) => commands::cmd_unfold(&ctx),
        Command::Verify(_) => commands::cmd_verify(&ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    std::process::exit(code);
}
