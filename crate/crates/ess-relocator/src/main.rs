use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use ess_proto::clock::SystemClock;
use ess_relocator::{Relocator, RelocatorConfig};

/// Block relocation service: listens for preemption notices and drains
/// about-to-be-preempted datanodes.
#[derive(Parser)]
#[command(name = "ess-relocator")]
struct Args {
    /// Control endpoint address for preemption notices.
    #[arg(long, default_value = "127.0.0.1:9100")]
    listen: String,

    /// Namenode address.
    #[arg(long, default_value = "127.0.0.1:9000")]
    namenode: String,

    /// Concurrent block transfers per drain.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,

    /// Append drain reports (JSON lines) to this file.
    #[arg(long)]
    report_file: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let relocator = Arc::new(Relocator::new(
        RelocatorConfig {
            namenode: args.namenode,
            parallelism: args.parallelism.max(1),
            report_file: args.report_file,
        },
        Arc::new(SystemClock::new()),
    ));
    let handle = match ess_relocator::spawn(relocator, args.listen.as_str()) {
        Ok(handle) => handle,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.listen);
            std::process::exit(2);
        }
    };
    loop {
        std::thread::park();
        let _ = &handle;
    }
}
