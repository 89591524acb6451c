use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ess_bench::{CostInputs, SizingInput, WorkloadKind, WorkloadSpec};
use ess_client::{Client, ClientConfig};
use ess_inject::ClusterConfig;
use ess_proto::clock::SystemClock;
use ess_proto::units;

/// Benchmark CLI: workloads, bandwidth series, cost model and sizing.
#[derive(Parser)]
#[command(name = "ess-bench")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a workload against a cluster and write a JSON report.
    Run {
        /// Workload spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Cluster layout (JSON with at least the namenode address).
        #[arg(long)]
        cluster: PathBuf,
        /// Report output path.
        #[arg(long, default_value = "run.json")]
        out: PathBuf,
        /// Also write the per-second series as CSV.
        #[arg(long)]
        samples_csv: Option<PathBuf>,
        /// Skip dataset preloading for read paths.
        #[arg(long)]
        no_preload: bool,
        /// Reference to the injector event log running alongside.
        #[arg(long)]
        events_log: Option<String>,
        /// Block size; must match the cluster configuration.
        #[arg(long, default_value = "1MiB", value_parser = units::parse_size)]
        block_size: u64,
    },
    /// Evaluate the deployment cost model.
    Cost {
        /// Cost inputs (JSON).
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Drain-time and max-capacity sizing for one instance shape.
    Sizing {
        /// Instance memory, e.g. "64GB".
        #[arg(long, value_parser = units::parse_size)]
        memory: u64,
        /// Egress bandwidth, e.g. "32Gbit".
        #[arg(long)]
        egress: String,
        /// Preemption notice period, e.g. "30s".
        #[arg(long, value_parser = units::parse_duration)]
        notice: std::time::Duration,
    },
    /// Empirical CDF of a lifetime sample file (one seconds value per line).
    Cdf {
        #[arg(long)]
        samples: PathBuf,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Args::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(args: Args) -> Result<(), String> {
    match args.command {
        Command::Run {
            spec,
            cluster,
            out,
            samples_csv,
            no_preload,
            events_log,
            block_size,
        } => {
            let spec_text = std::fs::read_to_string(&spec)
                .map_err(|e| format!("cannot read {}: {e}", spec.display()))?;
            let spec: WorkloadSpec = serde_json::from_str(&spec_text)
                .map_err(|e| format!("bad workload spec: {e}"))?;
            spec.validate().map_err(|e| e.to_string())?;
            let cluster = ClusterConfig::load(&cluster).map_err(|e| e.to_string())?;

            let mut cfg = ClientConfig::new(cluster.namenode.clone());
            cfg.block_size = block_size as u32;
            let clock = Arc::new(SystemClock::new());
            let client = Client::new(cfg, clock.clone());

            if !no_preload && !matches!(spec.kind, WorkloadKind::WriteOnly) {
                eprintln!("preloading {} objects", spec.object_count);
                ess_bench::preload(&client, &spec).map_err(|e| e.to_string())?;
            }
            eprintln!("running {:?} for {}s", spec.kind, spec.duration_s);
            let outcome =
                ess_bench::run_workload(&client, &spec, clock.as_ref()).map_err(|e| e.to_string())?;

            let report = ess_bench::RunReport::new(
                spec,
                ess_bench::ClusterInfo {
                    namenode: cluster.namenode,
                    datanode_slots: cluster.slots.len(),
                    block_size_bytes: block_size as u32,
                    egress_limit_bytes_per_sec: None,
                },
                outcome.summary,
                outcome.samples,
                events_log,
            );
            std::fs::write(&out, report.to_json())
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            if let Some(path) = samples_csv {
                std::fs::write(&path, report.samples_csv())
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
            eprintln!(
                "{} ops ok, {:.1} MB/s read, {:.1} MB/s write; report in {}",
                report.summary.ops_ok,
                report.summary.read_mb_s,
                report.summary.write_mb_s,
                out.display()
            );
            Ok(())
        }
        Command::Cost { inputs } => {
            let text = std::fs::read_to_string(&inputs)
                .map_err(|e| format!("cannot read {}: {e}", inputs.display()))?;
            let inputs: CostInputs =
                serde_json::from_str(&text).map_err(|e| format!("bad cost inputs: {e}"))?;
            let breakdown = ess_bench::cost_model(&inputs).map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&breakdown).expect("serializes")
            );
            Ok(())
        }
        Command::Sizing {
            memory,
            egress,
            notice,
        } => {
            let egress_bits = units::parse_rate_bits(&egress).map_err(|e| e.to_string())?;
            let output = ess_bench::evaluate(&SizingInput {
                memory_capacity_bytes: memory,
                egress_bits_per_sec: egress_bits,
                notice_period: notice,
            })
            .map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&output).expect("serializes")
            );
            Ok(())
        }
        Command::Cdf { samples, out } => {
            let text = std::fs::read_to_string(&samples)
                .map_err(|e| format!("cannot read {}: {e}", samples.display()))?;
            let values: Vec<f64> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.trim()
                        .parse()
                        .map_err(|_| format!("bad sample line {l:?}"))
                })
                .collect::<Result<_, _>>()?;
            let points = ess_inject::empirical_cdf(&values).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            ess_inject::write_cdf_csv(&points, &mut buf).map_err(|e| e.to_string())?;
            match out {
                Some(path) => std::fs::write(&path, buf)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => print!("{}", String::from_utf8_lossy(&buf)),
            }
            Ok(())
        }
    }
}
