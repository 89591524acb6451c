use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ess_client::{Client, ClientConfig};
use ess_proto::clock::SystemClock;
use ess_proto::{units, BlockLocation, ObjectName};

/// Command-line shim over the ess client library.
#[derive(Parser)]
#[command(name = "ess")]
struct Args {
    /// Namenode address (or env ESS_NAMENODE).
    #[arg(long, env = "ESS_NAMENODE", default_value = "127.0.0.1:9000")]
    namenode: String,

    /// Block size; must match the cluster configuration.
    #[arg(long, default_value = "1MiB", value_parser = units::parse_size)]
    block_size: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Store an object from a file or stdin.
    Put {
        name: String,
        /// Input file; stdin when omitted.
        file: Option<PathBuf>,
    },
    /// Read an object to a file or stdout.
    Get {
        name: String,
        /// Output file; stdout when omitted.
        file: Option<PathBuf>,
    },
    /// Delete an object.
    Del { name: String },
    /// Print object metadata as JSON.
    Stat { name: String },
}

fn run(args: Args) -> Result<(), String> {
    let mut cfg = ClientConfig::new(args.namenode);
    cfg.block_size = args.block_size as u32;
    let client = Client::new(cfg, Arc::new(SystemClock::new()));

    let parse_name = |s: &str| ObjectName::new(s).map_err(|e| e.to_string());

    match args.command {
        Command::Put { name, file } => {
            let name = parse_name(&name)?;
            let data = match file {
                Some(path) => std::fs::read(&path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
                None => {
                    let mut buf = Vec::new();
                    std::io::stdin()
                        .read_to_end(&mut buf)
                        .map_err(|e| format!("cannot read stdin: {e}"))?;
                    buf
                }
            };
            let meta = client.put_object(&name, &data).map_err(|e| e.to_string())?;
            eprintln!("stored {name}: {} bytes in {} blocks", meta.size, meta.blocks.len());
            Ok(())
        }
        Command::Get { name, file } => {
            let name = parse_name(&name)?;
            let data = client.get_object(&name).map_err(|e| e.to_string())?;
            match file {
                Some(path) => std::fs::write(&path, &data)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => write_stdout(&data)?,
            }
            Ok(())
        }
        Command::Del { name } => {
            let name = parse_name(&name)?;
            client.delete_object(&name).map_err(|e| e.to_string())
        }
        Command::Stat { name } => {
            let name = parse_name(&name)?;
            let meta = client.lookup_fresh(&name).map_err(|e| e.to_string())?;
            let blocks: Vec<serde_json::Value> = meta
                .blocks
                .iter()
                .map(|b| {
                    serde_json::json!({
                        "id": b.id.0,
                        "index": b.index,
                        "length": b.length,
                        "version": b.version,
                        "location": match b.location {
                            BlockLocation::Node(n) => serde_json::json!(n.0),
                            BlockLocation::Lost => serde_json::json!("lost"),
                        },
                    })
                })
                .collect();
            let out = serde_json::json!({
                "name": meta.name.as_str(),
                "size": meta.size,
                "version": meta.version,
                "blocks": blocks,
            });
            let mut text = serde_json::to_string_pretty(&out).expect("valid json");
            text.push('\n');
            write_stdout(text.as_bytes())

        }
    }
}

/// Writes to stdout, treating a closed pipe as a normal early exit.
fn write_stdout(data: &[u8]) -> Result<(), String> {
    match std::io::stdout().write_all(data) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(format!("cannot write stdout: {e}")),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Args::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
