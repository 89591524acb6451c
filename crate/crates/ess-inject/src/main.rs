use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use ess_inject::{ClusterConfig, PreemptionModelParams, WireFleet};
use ess_proto::clock::SystemClock;
use ess_proto::units;

/// Spot-preemption injector: drives notices, terminations and respawns
/// against a running cluster, or samples lifetimes offline.
#[derive(Parser)]
#[command(name = "ess-inject")]
struct Args {
    /// Model parameters (JSON: distribution, notice_period_s,
    /// respawn_delay_s, seed).
    #[arg(long)]
    config: PathBuf,

    /// Cluster layout (JSON: namenode, relocator, slots). Required unless
    /// sampling offline.
    #[arg(long)]
    cluster: Option<PathBuf>,

    /// How long to run the schedule.
    #[arg(long, default_value = "7200s", value_parser = units::parse_duration)]
    duration: std::time::Duration,

    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Event log output (JSON lines).
    #[arg(long, default_value = "events.jsonl")]
    log: PathBuf,

    /// Offline mode: sample this many lifetimes instead of running.
    #[arg(long)]
    sample: Option<usize>,

    /// Output file for offline samples (one seconds value per line).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut params: PreemptionModelParams = serde_json::from_str(&text)
        .map_err(|e| format!("cannot parse {}: {e}", args.config.display()))?;
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    params.validate().map_err(|e| e.to_string())?;

    if let Some(n) = args.sample {
        let samples = ess_inject::sample_lifetimes(&params.distribution, params.seed, n)
            .map_err(|e| e.to_string())?;
        let out = args.out.unwrap_or_else(|| PathBuf::from("samples.csv"));
        let mut f = std::fs::File::create(&out)
            .map_err(|e| format!("cannot create {}: {e}", out.display()))?;
        for s in samples {
            writeln!(f, "{s}").map_err(|e| e.to_string())?;
        }
        eprintln!("wrote {n} lifetimes to {}", out.display());
        return Ok(());
    }

    let cluster_path = args
        .cluster
        .ok_or("either --cluster (run mode) or --sample (offline mode) is required")?;
    let cluster = ClusterConfig::load(&cluster_path).map_err(|e| e.to_string())?;
    let fleet = WireFleet::new(cluster);
    let clock = Arc::new(SystemClock::new());
    let events = ess_inject::run_schedule(&params, &fleet, clock.as_ref(), args.duration)
        .map_err(|e| e.to_string())?;
    std::fs::write(&args.log, ess_inject::events_to_jsonl(&events))
        .map_err(|e| format!("cannot write {}: {e}", args.log.display()))?;
    eprintln!("{} events logged to {}", events.len(), args.log.display());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Args::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
