//! Blocking framed-message transport over TCP. One request/response pair per
//! logical call; callers may pipeline by sending several requests before
//! reading the responses.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::error::{Error, Fault, Result};
use crate::message::Message;
use crate::wire::{self, FRAME_HEADER, MAX_PAYLOAD};

/// A TCP stream that speaks the framed wire protocol.
pub struct FramedStream {
    stream: TcpStream,
}

impl FramedStream {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<FramedStream> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(FramedStream { stream })
    }

    pub fn connect_timeout(addr: &SocketAddr, timeout: Duration) -> Result<FramedStream> {
        let stream = TcpStream::connect_timeout(addr, timeout)?;
        stream.set_nodelay(true)?;
        Ok(FramedStream { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Result<FramedStream> {
        stream.set_nodelay(true)?;
        Ok(FramedStream { stream })
    }

    pub fn peer_addr(&self) -> Result<SocketAddr> {
        Ok(self.stream.peer_addr()?)
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<()> {
        Ok(self.stream.set_read_timeout(timeout)?)
    }

    /// A second handle onto the same socket, e.g. for shutting it down from
    /// another thread.
    pub fn try_clone_inner(&self) -> Result<TcpStream> {
        Ok(self.stream.try_clone()?)
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }

    pub fn send(&mut self, msg: &Message) -> Result<()> {
        let frame = wire::encode_message(msg)?;
        self.stream.write_all(&frame)?;
        Ok(())
    }

    /// Reads one message. Returns `None` on a clean EOF at a frame boundary.
    pub fn recv(&mut self) -> Result<Option<Message>> {
        let mut header = [0u8; FRAME_HEADER];
        match read_exact_or_eof(&mut self.stream, &mut header)? {
            ReadOutcome::Eof => return Ok(None),
            ReadOutcome::Full => {}
        }
        let len = u32::from_be_bytes([header[0], header[1], header[2], header[3]]) as usize;
        if len > MAX_PAYLOAD {
            return Err(Fault::protocol(format!("frame announces {len} payload bytes")).into());
        }
        let mut frame = Vec::with_capacity(FRAME_HEADER + len);
        frame.extend_from_slice(&header);
        frame.resize(FRAME_HEADER + len, 0);
        self.stream.read_exact(&mut frame[FRAME_HEADER..])?;
        Ok(Some(wire::decode_message(&frame)?))
    }

    /// Sends a request and waits for its response. An error response frame
    /// surfaces as `Error::Fault`; connection loss as `Error::Io`.
    pub fn request(&mut self, msg: &Message) -> Result<Message> {
        self.send(msg)?;
        match self.recv()? {
            Some(Message::ErrorResponse(fault)) => Err(Error::Fault(fault)),
            Some(resp) => Ok(resp),
            None => Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before response",
            ))),
        }
    }
}

/// Idle-connection pool keyed by address. A connection that fails with an
/// I/O error is discarded along with any idle siblings to the same address,
/// since the peer is likely gone.
pub struct ConnPool {
    idle: parking_lot::Mutex<std::collections::HashMap<String, Vec<FramedStream>>>,
    per_addr: usize,
}

impl ConnPool {
    pub fn new(per_addr: usize) -> ConnPool {
        ConnPool {
            idle: parking_lot::Mutex::new(std::collections::HashMap::new()),
            per_addr,
        }
    }

    /// Runs `f` with a pooled or fresh connection to `addr`. The connection
    /// returns to the pool unless the call failed with an I/O error.
    pub fn with_conn<T>(
        &self,
        addr: &str,
        f: impl FnOnce(&mut FramedStream) -> Result<T>,
    ) -> Result<T> {
        let pooled = self.idle.lock().get_mut(addr).and_then(|v| v.pop());
        let mut conn = match pooled {
            Some(conn) => conn,
            None => FramedStream::connect(addr)?,
        };
        let result = f(&mut conn);
        match &result {
            Err(Error::Io(_)) => {
                self.idle.lock().remove(addr);
            }
            _ => {
                let mut idle = self.idle.lock();
                let slot = idle.entry(addr.to_string()).or_default();
                if slot.len() < self.per_addr {
                    slot.push(conn);
                }
            }
        }
        result
    }

    /// Sends `msg` and returns the response, pooling the connection.
    pub fn request(&self, addr: &str, msg: &Message) -> Result<Message> {
        self.with_conn(addr, |c| c.request(msg))
    }
}

enum ReadOutcome {
    Full,
    Eof,
}

/// Like `read_exact`, but distinguishes EOF-before-any-bytes from a torn read.
fn read_exact_or_eof(stream: &mut TcpStream, buf: &mut [u8]) -> Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(ReadOutcome::Eof),
            Ok(0) => {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "connection closed mid-frame",
                )))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Io(e)),
        }
    }
    Ok(ReadOutcome::Full)
}
