//! Framed binary encoding. Every message travels as
//! `[len: u32 big-endian][type: u8][payload: len bytes]` where `len` counts
//! payload bytes only, so the total frame is always `5 + len` bytes.
//! Integers are big-endian; strings and byte blobs are length-prefixed.

use crate::error::Fault;
use crate::message::Message;
use crate::types::{
    BlockDescriptor, BlockId, BlockLocation, DatanodeId, DatanodeRef, ObjectMetadata, ObjectName,
};

/// Frame header size: 4-byte length + 1-byte message type.
pub const FRAME_HEADER: usize = 5;

/// Largest payload a frame may carry.
pub const MAX_PAYLOAD: usize = i32::MAX as usize;

/// Serializes one message into a complete frame.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>, Fault> {
    let mut w = Writer::new();
    msg.encode_payload(&mut w);
    let payload = w.into_bytes();
    if payload.len() > MAX_PAYLOAD {
        return Err(Fault::protocol(format!(
            "payload of {} bytes exceeds frame limit",
            payload.len()
        )));
    }
    let mut frame = Vec::with_capacity(FRAME_HEADER + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.type_byte());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Parses one complete frame. Rejects truncated input, unknown type bytes,
/// and trailing bytes.
pub fn decode_message(bytes: &[u8]) -> Result<Message, Fault> {
    if bytes.len() < FRAME_HEADER {
        return Err(Fault::protocol(format!(
            "frame truncated: {} bytes is shorter than the {}-byte header",
            bytes.len(),
            FRAME_HEADER
        )));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let type_byte = bytes[4];
    if bytes.len() < FRAME_HEADER + len {
        return Err(Fault::protocol(format!(
            "frame truncated: header announces {} payload bytes, {} present",
            len,
            bytes.len() - FRAME_HEADER
        )));
    }
    if bytes.len() > FRAME_HEADER + len {
        return Err(Fault::protocol(format!(
            "{} trailing bytes after frame",
            bytes.len() - FRAME_HEADER - len
        )));
    }
    let mut r = Reader::new(&bytes[FRAME_HEADER..]);
    let msg = Message::decode_payload(type_byte, &mut r)?;
    r.expect_exhausted()?;
    Ok(msg)
}

/// Payload writer with the protocol's primitive encodings.
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    pub fn put_string(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    pub fn put_name(&mut self, v: &ObjectName) {
        self.put_string(v.as_str());
    }

    pub fn put_node(&mut self, v: DatanodeId) {
        self.put_u32(v.0);
    }

    pub fn put_block_id(&mut self, v: BlockId) {
        self.put_u64(v.0);
    }

    pub fn put_location(&mut self, v: BlockLocation) {
        match v {
            BlockLocation::Node(id) => {
                self.put_u8(0);
                self.put_node(id);
            }
            BlockLocation::Lost => self.put_u8(1),
        }
    }

    pub fn put_descriptor(&mut self, d: &BlockDescriptor) {
        self.put_block_id(d.id);
        self.put_location(d.location);
        self.put_u32(d.length);
        self.put_u32(d.index);
        self.put_u64(d.version);
    }

    pub fn put_node_ref(&mut self, r: &DatanodeRef) {
        self.put_node(r.id);
        self.put_string(&r.address);
    }

    pub fn put_metadata(&mut self, m: &ObjectMetadata) {
        self.put_name(&m.name);
        self.put_u64(m.size);
        self.put_u64(m.version);
        self.put_u32(m.blocks.len() as u32);
        for b in &m.blocks {
            self.put_descriptor(b);
        }
    }

    pub fn put_exclude(&mut self, nodes: &[DatanodeId]) {
        self.put_u32(nodes.len() as u32);
        for n in nodes {
            self.put_node(*n);
        }
    }
}

impl Default for Writer {
    fn default() -> Self {
        Writer::new()
    }
}

/// Payload reader mirroring [`Writer`]. All failures map to `ProtocolError`.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Fault> {
        if self.buf.len() - self.pos < n {
            return Err(Fault::protocol("payload truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_exhausted(&self) -> Result<(), Fault> {
        if self.pos != self.buf.len() {
            return Err(Fault::protocol(format!(
                "{} unparsed payload bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }

    pub fn get_u8(&mut self) -> Result<u8, Fault> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> Result<u32, Fault> {
        let s = self.take(4)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }

    pub fn get_u64(&mut self) -> Result<u64, Fault> {
        let s = self.take(8)?;
        Ok(u64::from_be_bytes([
            s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7],
        ]))
    }

    pub fn get_bytes(&mut self) -> Result<Vec<u8>, Fault> {
        let len = self.get_u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn get_string(&mut self) -> Result<String, Fault> {
        let bytes = self.get_bytes()?;
        String::from_utf8(bytes).map_err(|_| Fault::protocol("string is not valid UTF-8"))
    }

    pub fn get_name(&mut self) -> Result<ObjectName, Fault> {
        ObjectName::new(self.get_string()?)
    }

    pub fn get_node(&mut self) -> Result<DatanodeId, Fault> {
        Ok(DatanodeId(self.get_u32()?))
    }

    pub fn get_block_id(&mut self) -> Result<BlockId, Fault> {
        Ok(BlockId(self.get_u64()?))
    }

    pub fn get_location(&mut self) -> Result<BlockLocation, Fault> {
        match self.get_u8()? {
            0 => Ok(BlockLocation::Node(self.get_node()?)),
            1 => Ok(BlockLocation::Lost),
            t => Err(Fault::protocol(format!("unknown location tag {t:#04x}"))),
        }
    }

    pub fn get_descriptor(&mut self) -> Result<BlockDescriptor, Fault> {
        Ok(BlockDescriptor {
            id: self.get_block_id()?,
            location: self.get_location()?,
            length: self.get_u32()?,
            index: self.get_u32()?,
            version: self.get_u64()?,
        })
    }

    pub fn get_node_ref(&mut self) -> Result<DatanodeRef, Fault> {
        Ok(DatanodeRef {
            id: self.get_node()?,
            address: self.get_string()?,
        })
    }

    pub fn get_metadata(&mut self) -> Result<ObjectMetadata, Fault> {
        let name = self.get_name()?;
        let size = self.get_u64()?;
        let version = self.get_u64()?;
        let count = self.get_u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            blocks.push(self.get_descriptor()?);
        }
        Ok(ObjectMetadata {
            name,
            size,
            version,
            blocks,
        })
    }

    pub fn get_exclude(&mut self) -> Result<Vec<DatanodeId>, Fault> {
        let count = self.get_u32()? as usize;
        let mut nodes = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            nodes.push(self.get_node()?);
        }
        Ok(nodes)
    }
}
