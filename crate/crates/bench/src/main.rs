use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use skg_bench::scenario::{array_geometry, build_users};
use skg_bench::{
    emit_convergence, emit_outputs, load_config, run_capacity_sweep, run_large_antenna_convergence,
    run_pilot_sweep, Result, ScenarioConfig,
};
use skg_core::channel::cross_user_coherence;

#[derive(Parser)]
#[command(name = "skg-bench", version, about = "Downlink training design sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average and sum capacity of every strategy over the DL SNR list.
    Sweep(RunArgs),
    /// The same sweep with pilot-count checks.
    Pilots(RunArgs),
    /// Coherence and large-antenna gap over the configured array sizes.
    Converge(RunArgs),
    /// Parse the config and build every user's statistics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn report(paths: &[PathBuf], flagged: usize) {
    for p in paths {
        println!("wrote {}", p.display());
    }
    if flagged > 0 {
        eprintln!("warning: {flagged} flagged row(s), see manifest.json");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let res = run_capacity_sweep(&cfg)?;
            report(&emit_outputs(&res, &cfg, &args.out, "sweep")?, res.flags.len());
        }
        Command::Pilots(args) => {
            let cfg = load(&args)?;
            let res = run_pilot_sweep(&cfg)?;
            report(&emit_outputs(&res, &cfg, &args.out, "pilots")?, res.flags.len());
        }
        Command::Converge(args) => {
            let cfg = load(&args)?;
            let rows = run_large_antenna_convergence(&cfg)?;
            report(&emit_convergence(&rows, &cfg, &args.out)?, 0);
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let geom = array_geometry(&cfg)?;
            let users = build_users(&cfg, &geom)?;
            println!("config sha256 {}", cfg.content_hash());
            println!("M = {}, K = {}", geom.num_antennas(), users.len());
            for (k, u) in users.iter().enumerate() {
                println!(
                    "user {}: {} modes, UL SNR {:.3}",
                    k + 1,
                    u.modes.num_modes(),
                    u.uplink_snr
                );
            }
            if users.len() > 1 {
                let bases: Vec<_> = users.iter().map(|u| u.modes.clone()).collect();
                println!("coherence {:.6}", cross_user_coherence(&bases)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
