use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use ess_namenode::{NamenodeConfig, NamenodeFileConfig};
use ess_proto::clock::SystemClock;

/// Metadata service for the ess ephemeral datastore.
#[derive(Parser)]
#[command(name = "ess-namenode")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:9000")]
    listen: String,

    /// JSON config file (block_size_bytes, heartbeat_timeout_ms,
    /// placement_policy).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg: NamenodeConfig = match args.config {
        Some(path) => match NamenodeFileConfig::load(&path).and_then(|c| c.into_config()) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(2);
            }
        },
        None => NamenodeConfig::default(),
    };
    let handle = match ess_namenode::spawn(cfg, args.listen.as_str(), Arc::new(SystemClock::new()))
    {
        Ok(handle) => handle,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.listen);
            std::process::exit(2);
        }
    };
    // Serve until killed.
    loop {
        std::thread::park();
        let _ = &handle;
    }
}
