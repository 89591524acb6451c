//! Control endpoint: accepts preemption notices (BeginDrain frames) from the
//! injector, acks immediately, and runs the drain on its own thread.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use ess_proto::net::FramedStream;
use ess_proto::{Error, Fault, Message};

use crate::Relocator;

pub struct RelocatorServiceHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_join: Option<JoinHandle<()>>,
}

impl RelocatorServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        if let Some(j) = self.accept_join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for RelocatorServiceHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves preemption notices on `listen`.
pub fn spawn(
    relocator: Arc<Relocator>,
    listen: impl ToSocketAddrs,
) -> std::io::Result<RelocatorServiceHandle> {
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_shutdown = shutdown.clone();
    let accept_join = std::thread::Builder::new()
        .name("rl-accept".into())
        .spawn(move || {
            loop {
                let stream = match listener.accept() {
                    Ok((stream, _)) => stream,
                    Err(_) => continue,
                };
                if accept_shutdown.load(Ordering::SeqCst) {
                    return;
                }
                let relocator = relocator.clone();
                let _ = std::thread::Builder::new().name("rl-conn".into()).spawn(
                    move || {
                        if let Ok(framed) = FramedStream::from_stream(stream) {
                            serve_connection(framed, relocator);
                        }
                    },
                );
            }
        })?;
    log::info!("relocator control endpoint on {addr}");
    Ok(RelocatorServiceHandle {
        addr,
        shutdown,
        accept_join: Some(accept_join),
    })
}

fn serve_connection(mut conn: FramedStream, relocator: Arc<Relocator>) {
    loop {
        let request = match conn.recv() {
            Ok(Some(msg)) => msg,
            Ok(None) => return,
            Err(Error::Fault(fault)) => {
                let _ = conn.send(&Message::ErrorResponse(fault));
                return;
            }
            Err(Error::Io(_)) => return,
        };
        match request {
            Message::BeginDrain {
                node,
                deadline_in_ms,
            } => {
                // Ack the notice, then drain asynchronously: the sender's
                // timeline must not block on the transfer.
                if conn.send(&Message::BeginDrainOk).is_err() {
                    return;
                }
                let relocator = relocator.clone();
                let _ = std::thread::Builder::new().name("rl-drain".into()).spawn(
                    move || {
                        match relocator.handle_notice(node, Duration::from_millis(deadline_in_ms))
                        {
                            Ok(report) => log::info!(
                                "drain of {node}: moved {} lost {} skipped {} of {}",
                                report.blocks_moved,
                                report.blocks_lost,
                                report.blocks_skipped,
                                report.blocks_total
                            ),
                            Err(e) => log::error!("drain of {node} failed: {e}"),
                        }
                    },
                );
            }
            other => {
                let fault = Fault::protocol(format!(
                    "message {:#04x} is not a relocator request",
                    other.type_byte()
                ));
                if conn.send(&Message::ErrorResponse(fault)).is_err() {
                    return;
                }
            }
        }
    }
}
