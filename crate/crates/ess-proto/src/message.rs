//! The closed set of protocol messages. Requests carry type bytes
//! 0x01..=0x14; a successful response reuses its request's type byte with the
//! high bit set; error responses use the dedicated 0x7F type.

use crate::error::{ErrorCode, Fault};
use crate::types::{
    BlockDescriptor, BlockId, DatanodeId, DatanodeRef, ObjectMetadata, ObjectName,
};
use crate::wire::{Reader, Writer};

/// Request type bytes (stable on the wire).
pub mod type_byte {
    pub const REGISTER: u8 = 0x01;
    pub const HEARTBEAT: u8 = 0x02;
    pub const CREATE_OBJECT: u8 = 0x03;
    pub const GET_METADATA: u8 = 0x04;
    pub const ALLOCATE_BLOCK: u8 = 0x05;
    pub const COMMIT_RELOCATION: u8 = 0x06;
    pub const LIST_BLOCKS_ON_NODE: u8 = 0x07;
    pub const BEGIN_DRAIN: u8 = 0x08;
    pub const MARK_LOST: u8 = 0x09;
    pub const DELETE_OBJECT: u8 = 0x0A;
    pub const WRITE_BLOCK: u8 = 0x10;
    pub const READ_BLOCK: u8 = 0x11;
    pub const DELETE_BLOCK: u8 = 0x12;
    pub const ENTER_DRAINING: u8 = 0x13;
    pub const TERMINATE: u8 = 0x14;
    pub const ERROR_RESPONSE: u8 = 0x7F;

    /// Success responses echo the request type with the high bit set.
    pub const RESPONSE_BIT: u8 = 0x80;

    pub const REGISTER_OK: u8 = REGISTER | RESPONSE_BIT;
    pub const HEARTBEAT_OK: u8 = HEARTBEAT | RESPONSE_BIT;
    pub const CREATE_OBJECT_OK: u8 = CREATE_OBJECT | RESPONSE_BIT;
    pub const GET_METADATA_OK: u8 = GET_METADATA | RESPONSE_BIT;
    pub const ALLOCATE_BLOCK_OK: u8 = ALLOCATE_BLOCK | RESPONSE_BIT;
    pub const COMMIT_RELOCATION_OK: u8 = COMMIT_RELOCATION | RESPONSE_BIT;
    pub const LIST_BLOCKS_ON_NODE_OK: u8 = LIST_BLOCKS_ON_NODE | RESPONSE_BIT;
    pub const BEGIN_DRAIN_OK: u8 = BEGIN_DRAIN | RESPONSE_BIT;
    pub const MARK_LOST_OK: u8 = MARK_LOST | RESPONSE_BIT;
    pub const DELETE_OBJECT_OK: u8 = DELETE_OBJECT | RESPONSE_BIT;
    pub const WRITE_BLOCK_OK: u8 = WRITE_BLOCK | RESPONSE_BIT;
    pub const READ_BLOCK_OK: u8 = READ_BLOCK | RESPONSE_BIT;
    pub const DELETE_BLOCK_OK: u8 = DELETE_BLOCK | RESPONSE_BIT;
    pub const ENTER_DRAINING_OK: u8 = ENTER_DRAINING | RESPONSE_BIT;
}

/// Block allocation requests. `Append` grows an object (client write path),
/// `Replace` swaps out a descriptor whose write was fenced off by a draining
/// node, and `Destination` asks for a relocation target without committing
/// anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllocateRequest {
    Append {
        object: ObjectName,
        length: u32,
        exclude: Vec<DatanodeId>,
    },
    Replace {
        object: ObjectName,
        index: u32,
        prev_block: BlockId,
        length: u32,
        exclude: Vec<DatanodeId>,
    },
    Destination {
        block: BlockId,
        exclude: Vec<DatanodeId>,
    },
}

/// One entry of a ListBlocksOnNode response: a block plus its owning object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOnNode {
    pub object: ObjectName,
    pub block: BlockDescriptor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    // Namenode-bound requests.
    Register {
        address: String,
        capacity_blocks: u32,
        protocol_version: u8,
    },
    Heartbeat {
        node: DatanodeId,
    },
    CreateObject {
        name: ObjectName,
    },
    GetMetadata {
        name: ObjectName,
    },
    AllocateBlock(AllocateRequest),
    CommitRelocation {
        block: BlockId,
        new_node: DatanodeId,
        expected_version: u64,
    },
    ListBlocksOnNode {
        node: DatanodeId,
    },
    /// Also delivered to the relocator's control endpoint as the preemption
    /// notice. The deadline travels as a duration relative to receipt so that
    /// services with unsynchronized clocks agree on the window.
    BeginDrain {
        node: DatanodeId,
        deadline_in_ms: u64,
    },
    MarkLost {
        node: DatanodeId,
    },
    DeleteObject {
        name: ObjectName,
    },

    // Datanode-bound requests.
    WriteBlock {
        block: BlockId,
        offset: u32,
        crc: u32,
        data: Vec<u8>,
    },
    ReadBlock {
        block: BlockId,
        offset: u32,
        len: u32,
    },
    DeleteBlock {
        block: BlockId,
    },
    EnterDraining {
        deadline_in_ms: u64,
    },
    Terminate,

    // Success responses.
    RegisterOk {
        node: DatanodeId,
    },
    HeartbeatOk,
    CreateObjectOk,
    GetMetadataOk {
        meta: ObjectMetadata,
        /// Addresses for every datanode referenced by the metadata.
        nodes: Vec<DatanodeRef>,
    },
    /// For `Append`/`Replace` the descriptor is the newly allocated block; for
    /// `Destination` it is the existing block with `location` set to the
    /// proposed target (nothing is committed until CommitRelocation).
    AllocateBlockOk {
        block: BlockDescriptor,
        target: DatanodeRef,
    },
    CommitRelocationOk {
        version: u64,
    },
    ListBlocksOnNodeOk {
        /// The queried node, with its dialable address.
        node: DatanodeRef,
        blocks: Vec<BlockOnNode>,
    },
    BeginDrainOk,
    MarkLostOk {
        lost_blocks: u64,
    },
    DeleteObjectOk,
    WriteBlockOk,
    ReadBlockOk {
        crc: u32,
        data: Vec<u8>,
    },
    DeleteBlockOk,
    EnterDrainingOk,

    ErrorResponse(Fault),
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        use type_byte::*;
        match self {
            Message::Register { .. } => REGISTER,
            Message::Heartbeat { .. } => HEARTBEAT,
            Message::CreateObject { .. } => CREATE_OBJECT,
            Message::GetMetadata { .. } => GET_METADATA,
            Message::AllocateBlock(_) => ALLOCATE_BLOCK,
            Message::CommitRelocation { .. } => COMMIT_RELOCATION,
            Message::ListBlocksOnNode { .. } => LIST_BLOCKS_ON_NODE,
            Message::BeginDrain { .. } => BEGIN_DRAIN,
            Message::MarkLost { .. } => MARK_LOST,
            Message::DeleteObject { .. } => DELETE_OBJECT,
            Message::WriteBlock { .. } => WRITE_BLOCK,
            Message::ReadBlock { .. } => READ_BLOCK,
            Message::DeleteBlock { .. } => DELETE_BLOCK,
            Message::EnterDraining { .. } => ENTER_DRAINING,
            Message::Terminate => TERMINATE,
            Message::RegisterOk { .. } => REGISTER_OK,
            Message::HeartbeatOk => HEARTBEAT_OK,
            Message::CreateObjectOk => CREATE_OBJECT_OK,
            Message::GetMetadataOk { .. } => GET_METADATA_OK,
            Message::AllocateBlockOk { .. } => ALLOCATE_BLOCK_OK,
            Message::CommitRelocationOk { .. } => COMMIT_RELOCATION_OK,
            Message::ListBlocksOnNodeOk { .. } => LIST_BLOCKS_ON_NODE_OK,
            Message::BeginDrainOk => BEGIN_DRAIN_OK,
            Message::MarkLostOk { .. } => MARK_LOST_OK,
            Message::DeleteObjectOk => DELETE_OBJECT_OK,
            Message::WriteBlockOk => WRITE_BLOCK_OK,
            Message::ReadBlockOk { .. } => READ_BLOCK_OK,
            Message::DeleteBlockOk => DELETE_BLOCK_OK,
            Message::EnterDrainingOk => ENTER_DRAINING_OK,
            Message::ErrorResponse(_) => ERROR_RESPONSE,
        }
    }

    pub(crate) fn encode_payload(&self, w: &mut Writer) {
        match self {
            Message::Register {
                address,
                capacity_blocks,
                protocol_version,
            } => {
                w.put_string(address);
                w.put_u32(*capacity_blocks);
                w.put_u8(*protocol_version);
            }
            Message::Heartbeat { node } => w.put_node(*node),
            Message::CreateObject { name } => w.put_name(name),
            Message::GetMetadata { name } => w.put_name(name),
            Message::AllocateBlock(req) => match req {
                AllocateRequest::Append {
                    object,
                    length,
                    exclude,
                } => {
                    w.put_u8(0);
                    w.put_name(object);
                    w.put_u32(*length);
                    w.put_exclude(exclude);
                }
                AllocateRequest::Replace {
                    object,
                    index,
                    prev_block,
                    length,
                    exclude,
                } => {
                    w.put_u8(1);
                    w.put_name(object);
                    w.put_u32(*index);
                    w.put_block_id(*prev_block);
                    w.put_u32(*length);
                    w.put_exclude(exclude);
                }
                AllocateRequest::Destination { block, exclude } => {
                    w.put_u8(2);
                    w.put_block_id(*block);
                    w.put_exclude(exclude);
                }
            },
            Message::CommitRelocation {
                block,
                new_node,
                expected_version,
            } => {
                w.put_block_id(*block);
                w.put_node(*new_node);
                w.put_u64(*expected_version);
            }
            Message::ListBlocksOnNode { node } => w.put_node(*node),
            Message::BeginDrain {
                node,
                deadline_in_ms,
            } => {
                w.put_node(*node);
                w.put_u64(*deadline_in_ms);
            }
            Message::MarkLost { node } => w.put_node(*node),
            Message::DeleteObject { name } => w.put_name(name),
            Message::WriteBlock {
                block,
                offset,
                crc,
                data,
            } => {
                w.put_block_id(*block);
                w.put_u32(*offset);
                w.put_u32(*crc);
                w.put_bytes(data);
            }
            Message::ReadBlock { block, offset, len } => {
                w.put_block_id(*block);
                w.put_u32(*offset);
                w.put_u32(*len);
            }
            Message::DeleteBlock { block } => w.put_block_id(*block),
            Message::EnterDraining { deadline_in_ms } => w.put_u64(*deadline_in_ms),
            Message::Terminate => {}
            Message::RegisterOk { node } => w.put_node(*node),
            Message::HeartbeatOk => {}
            Message::CreateObjectOk => {}
            Message::GetMetadataOk { meta, nodes } => {
                w.put_metadata(meta);
                w.put_u32(nodes.len() as u32);
                for n in nodes {
                    w.put_node_ref(n);
                }
            }
            Message::AllocateBlockOk { block, target } => {
                w.put_descriptor(block);
                w.put_node_ref(target);
            }
            Message::CommitRelocationOk { version } => w.put_u64(*version),
            Message::ListBlocksOnNodeOk { node, blocks } => {
                w.put_node_ref(node);
                w.put_u32(blocks.len() as u32);
                for b in blocks {
                    w.put_name(&b.object);
                    w.put_descriptor(&b.block);
                }
            }
            Message::BeginDrainOk => {}
            Message::MarkLostOk { lost_blocks } => w.put_u64(*lost_blocks),
            Message::DeleteObjectOk => {}
            Message::WriteBlockOk => {}
            Message::ReadBlockOk { crc, data } => {
                w.put_u32(*crc);
                w.put_bytes(data);
            }
            Message::DeleteBlockOk => {}
            Message::EnterDrainingOk => {}
            Message::ErrorResponse(fault) => {
                w.put_u8(fault.code.to_wire());
                w.put_string(&fault.detail);
            }
        }
    }

    pub(crate) fn decode_payload(tb: u8, r: &mut Reader<'_>) -> Result<Message, Fault> {
        use type_byte::*;
        let msg = match tb {
            REGISTER => Message::Register {
                address: r.get_string()?,
                capacity_blocks: r.get_u32()?,
                protocol_version: r.get_u8()?,
            },
            HEARTBEAT => Message::Heartbeat {
                node: r.get_node()?,
            },
            CREATE_OBJECT => Message::CreateObject {
                name: r.get_name()?,
            },
            GET_METADATA => Message::GetMetadata {
                name: r.get_name()?,
            },
            ALLOCATE_BLOCK => {
                let req = match r.get_u8()? {
                    0 => AllocateRequest::Append {
                        object: r.get_name()?,
                        length: r.get_u32()?,
                        exclude: r.get_exclude()?,
                    },
                    1 => AllocateRequest::Replace {
                        object: r.get_name()?,
                        index: r.get_u32()?,
                        prev_block: r.get_block_id()?,
                        length: r.get_u32()?,
                        exclude: r.get_exclude()?,
                    },
                    2 => AllocateRequest::Destination {
                        block: r.get_block_id()?,
                        exclude: r.get_exclude()?,
                    },
                    t => {
                        return Err(Fault::protocol(format!(
                            "unknown allocation mode {t:#04x}"
                        )))
                    }
                };
                Message::AllocateBlock(req)
            }
            COMMIT_RELOCATION => Message::CommitRelocation {
                block: r.get_block_id()?,
                new_node: r.get_node()?,
                expected_version: r.get_u64()?,
            },
            LIST_BLOCKS_ON_NODE => Message::ListBlocksOnNode {
                node: r.get_node()?,
            },
            BEGIN_DRAIN => Message::BeginDrain {
                node: r.get_node()?,
                deadline_in_ms: r.get_u64()?,
            },
            MARK_LOST => Message::MarkLost {
                node: r.get_node()?,
            },
            DELETE_OBJECT => Message::DeleteObject {
                name: r.get_name()?,
            },
            WRITE_BLOCK => Message::WriteBlock {
                block: r.get_block_id()?,
                offset: r.get_u32()?,
                crc: r.get_u32()?,
                data: r.get_bytes()?,
            },
            READ_BLOCK => Message::ReadBlock {
                block: r.get_block_id()?,
                offset: r.get_u32()?,
                len: r.get_u32()?,
            },
            DELETE_BLOCK => Message::DeleteBlock {
                block: r.get_block_id()?,
            },
            ENTER_DRAINING => Message::EnterDraining {
                deadline_in_ms: r.get_u64()?,
            },
            TERMINATE => Message::Terminate,
            REGISTER_OK => Message::RegisterOk {
                node: r.get_node()?,
            },
            HEARTBEAT_OK => Message::HeartbeatOk,
            CREATE_OBJECT_OK => Message::CreateObjectOk,
            GET_METADATA_OK => {
                let meta = r.get_metadata()?;
                let count = r.get_u32()? as usize;
                let mut nodes = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    nodes.push(r.get_node_ref()?);
                }
                Message::GetMetadataOk { meta, nodes }
            }
            ALLOCATE_BLOCK_OK => Message::AllocateBlockOk {
                block: r.get_descriptor()?,
                target: r.get_node_ref()?,
            },
            COMMIT_RELOCATION_OK => Message::CommitRelocationOk {
                version: r.get_u64()?,
            },
            LIST_BLOCKS_ON_NODE_OK => {
                let node = r.get_node_ref()?;
                let count = r.get_u32()? as usize;
                let mut blocks = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    blocks.push(BlockOnNode {
                        object: r.get_name()?,
                        block: r.get_descriptor()?,
                    });
                }
                Message::ListBlocksOnNodeOk { node, blocks }
            }
            BEGIN_DRAIN_OK => Message::BeginDrainOk,
            MARK_LOST_OK => Message::MarkLostOk {
                lost_blocks: r.get_u64()?,
            },
            DELETE_OBJECT_OK => Message::DeleteObjectOk,
            WRITE_BLOCK_OK => Message::WriteBlockOk,
            READ_BLOCK_OK => Message::ReadBlockOk {
                crc: r.get_u32()?,
                data: r.get_bytes()?,
            },
            DELETE_BLOCK_OK => Message::DeleteBlockOk,
            ENTER_DRAINING_OK => Message::EnterDrainingOk,
            ERROR_RESPONSE => {
                let code = r.get_u8()?;
                let code = ErrorCode::from_wire(code)
                    .ok_or_else(|| Fault::protocol(format!("unknown error code {code}")))?;
                Message::ErrorResponse(Fault::new(code, r.get_string()?))
            }
            other => {
                return Err(Fault::protocol(format!(
                    "unknown message type {other:#04x}"
                )));
            }
        };
        Ok(msg)
    }
}
