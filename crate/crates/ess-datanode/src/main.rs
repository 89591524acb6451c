use std::net::IpAddr;
use std::sync::Arc;

use clap::Parser;
use ess_datanode::DatanodeConfig;
use ess_proto::clock::SystemClock;
use ess_proto::units;

/// In-memory block storage node for the ess ephemeral datastore.
#[derive(Parser)]
#[command(name = "ess-datanode")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,

    /// Namenode address to register with.
    #[arg(long, default_value = "127.0.0.1:9000")]
    namenode: String,

    /// Number of blocks this node can hold.
    #[arg(long, default_value_t = 256)]
    capacity_blocks: u32,

    /// Block size in bytes; must match the namenode's configuration.
    #[arg(long, default_value = "1MiB", value_parser = units::parse_size)]
    block_size: u64,

    /// Egress bandwidth cap, e.g. "50MB/s" or "400Mbit" (unlimited if unset).
    #[arg(long)]
    egress_limit: Option<String>,

    /// Ingress bandwidth cap (unlimited if unset).
    #[arg(long)]
    ingress_limit: Option<String>,

    /// Heartbeat period.
    #[arg(long, default_value = "1s", value_parser = units::parse_duration)]
    heartbeat_interval: std::time::Duration,

    /// Additional peer IPs allowed to send drain/terminate control messages
    /// (loopback is always allowed).
    #[arg(long = "control-peer")]
    control_peers: Vec<IpAddr>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let parse_rate = |flag: &Option<String>| -> Option<u64> {
        flag.as_ref().map(|s| match units::parse_rate_bytes(s) {
            Ok(rate) if rate > 0 => rate,
            Ok(_) => {
                eprintln!("error: throttle rate must be positive");
                std::process::exit(2);
            }
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(2);
            }
        })
    };

    let cfg = DatanodeConfig {
        listen: args.listen,
        namenode: args.namenode,
        capacity_blocks: args.capacity_blocks,
        block_size: args.block_size as u32,
        egress_limit: parse_rate(&args.egress_limit),
        ingress_limit: parse_rate(&args.ingress_limit),
        heartbeat_interval: args.heartbeat_interval,
        control_peers: args.control_peers,
    };

    let handle = match ess_datanode::spawn(cfg, Arc::new(SystemClock::new())) {
        Ok(handle) => handle,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    println!("{} {}", handle.node_id(), handle.addr());

    // Serve until terminated remotely or killed.
    loop {
        std::thread::sleep(std::time::Duration::from_millis(200));
        if handle.store().state().is_terminated() {
            return;
        }
    }
}
