//! Wire-protocol tests: round-trip identity, injectivity over a random
//! corpus, and frame arithmetic.

use std::collections::HashMap;

use ess_proto::message::{type_byte, AllocateRequest, BlockOnNode};
use ess_proto::wire::{decode_message, encode_message, FRAME_HEADER};
use ess_proto::{
    BlockDescriptor, BlockId, BlockLocation, DatanodeId, DatanodeRef, ErrorCode, Fault, Message,
    ObjectMetadata, ObjectName,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_name(rng: &mut impl Rng) -> ObjectName {
    let segments = rng.gen_range(1..=4);
    let name = (0..segments)
        .map(|_| format!("s{}", rng.gen_range(0u32..10_000)))
        .collect::<Vec<_>>()
        .join("/");
    ObjectName::new(name).unwrap()
}

fn random_location(rng: &mut impl Rng) -> BlockLocation {
    if rng.gen_bool(0.2) {
        BlockLocation::Lost
    } else {
        BlockLocation::Node(DatanodeId(rng.gen()))
    }
}

fn random_descriptor(rng: &mut impl Rng) -> BlockDescriptor {
    BlockDescriptor {
        id: BlockId(rng.gen()),
        location: random_location(rng),
        length: rng.gen_range(0..=1024),
        index: rng.gen_range(0..64),
        version: rng.gen(),
    }
}

fn random_exclude(rng: &mut impl Rng) -> Vec<DatanodeId> {
    (0..rng.gen_range(0..4)).map(|_| DatanodeId(rng.gen())).collect()
}

fn random_node_ref(rng: &mut impl Rng) -> DatanodeRef {
    DatanodeRef {
        id: DatanodeId(rng.gen()),
        address: format!("127.0.0.1:{}", rng.gen_range(1024u16..60000)),
    }
}

fn random_bytes(rng: &mut impl Rng) -> Vec<u8> {
    let len = rng.gen_range(0..256);
    let mut data = vec![0u8; len];
    rng.fill_bytes(&mut data);
    data
}

fn random_message(rng: &mut impl Rng) -> Message {
    match rng.gen_range(0..30) {
        0 => Message::Register {
            address: format!("10.0.0.{}:9001", rng.gen_range(1u8..255)),
            capacity_blocks: rng.gen(),
            protocol_version: rng.gen(),
        },
        1 => Message::Heartbeat {
            node: DatanodeId(rng.gen()),
        },
        2 => Message::CreateObject {
            name: random_name(rng),
        },
        3 => Message::GetMetadata {
            name: random_name(rng),
        },
        4 => Message::AllocateBlock(AllocateRequest::Append {
            object: random_name(rng),
            length: rng.gen(),
            exclude: random_exclude(rng),
        }),
        5 => Message::AllocateBlock(AllocateRequest::Replace {
            object: random_name(rng),
            index: rng.gen(),
            prev_block: BlockId(rng.gen()),
            length: rng.gen(),
            exclude: random_exclude(rng),
        }),
        6 => Message::AllocateBlock(AllocateRequest::Destination {
            block: BlockId(rng.gen()),
            exclude: random_exclude(rng),
        }),
        7 => Message::CommitRelocation {
            block: BlockId(rng.gen()),
            new_node: DatanodeId(rng.gen()),
            expected_version: rng.gen(),
        },
        8 => Message::ListBlocksOnNode {
            node: DatanodeId(rng.gen()),
        },
        9 => Message::BeginDrain {
            node: DatanodeId(rng.gen()),
            deadline_in_ms: rng.gen(),
        },
        10 => Message::MarkLost {
            node: DatanodeId(rng.gen()),
        },
        11 => Message::DeleteObject {
            name: random_name(rng),
        },
        12 => {
            let data = random_bytes(rng);
            Message::WriteBlock {
                block: BlockId(rng.gen()),
                offset: rng.gen_range(0..1024),
                crc: ess_proto::crc::crc32(&data),
                data,
            }
        }
        13 => Message::ReadBlock {
            block: BlockId(rng.gen()),
            offset: rng.gen_range(0..1024),
            len: rng.gen_range(0..1024),
        },
        14 => Message::DeleteBlock {
            block: BlockId(rng.gen()),
        },
        15 => Message::EnterDraining {
            deadline_in_ms: rng.gen(),
        },
        16 => Message::Terminate,
        17 => Message::RegisterOk {
            node: DatanodeId(rng.gen()),
        },
        18 => Message::HeartbeatOk,
        19 => Message::CreateObjectOk,
        20 => {
            let blocks: Vec<_> = (0..rng.gen_range(0..5))
                .map(|i| {
                    let mut d = random_descriptor(rng);
                    d.index = i;
                    d
                })
                .collect();
            let size = blocks.iter().map(|b| b.length as u64).sum();
            Message::GetMetadataOk {
                meta: ObjectMetadata {
                    name: random_name(rng),
                    size,
                    version: rng.gen(),
                    blocks,
                },
                nodes: (0..rng.gen_range(0..3)).map(|_| random_node_ref(rng)).collect(),
            }
        }
        21 => Message::AllocateBlockOk {
            block: random_descriptor(rng),
            target: random_node_ref(rng),
        },
        22 => Message::CommitRelocationOk { version: rng.gen() },
        23 => Message::ListBlocksOnNodeOk {
            node: random_node_ref(rng),
            blocks: (0..rng.gen_range(0..5))
                .map(|_| BlockOnNode {
                    object: random_name(rng),
                    block: random_descriptor(rng),
                })
                .collect(),
        },
        24 => Message::BeginDrainOk,
        25 => Message::MarkLostOk {
            lost_blocks: rng.gen(),
        },
        26 => Message::DeleteObjectOk,
        27 => {
            let data = random_bytes(rng);
            Message::ReadBlockOk {
                crc: ess_proto::crc::crc32(&data),
                data,
            }
        }
        28 => Message::EnterDrainingOk,
        _ => {
            let codes = [
                ErrorCode::NotFound,
                ErrorCode::DataUnavailable,
                ErrorCode::NodeDraining,
                ErrorCode::StaleLocation,
                ErrorCode::CapacityExhausted,
                ErrorCode::AlreadyExists,
                ErrorCode::ProtocolError,
                ErrorCode::Conflict,
            ];
            Message::ErrorResponse(Fault::new(
                *codes.choose(rng).unwrap(),
                format!("detail-{}", rng.gen_range(0u32..1000)),
            ))
        }
    }
}

/// Round-trip, injectivity across distinct messages, and the frame-size rule,
/// all over one seeded corpus of 10^4 random messages.
#[test]
fn corpus_roundtrip_and_injectivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x655353);
    let mut seen: HashMap<Vec<u8>, Message> = HashMap::new();
    for _ in 0..10_000 {
        let msg = random_message(&mut rng);
        let frame = encode_message(&msg).unwrap();

        // Total frame size is always header + payload length.
        let payload_len =
            u32::from_be_bytes([frame[0], frame[1], frame[2], frame[3]]) as usize;
        assert_eq!(frame.len(), FRAME_HEADER + payload_len);

        // Deterministic encoding for equal inputs.
        assert_eq!(encode_message(&msg).unwrap(), frame);

        let decoded = decode_message(&frame).unwrap();
        assert_eq!(decoded, msg);

        // Two distinct messages never share an encoding.
        if let Some(prev) = seen.insert(frame, msg.clone()) {
            assert_eq!(prev, msg, "distinct messages collided on one encoding");
        }
    }
}

#[test]
fn empty_payload_frame_is_five_bytes() {
    // Heartbeat ack carries no payload: length field 0, total frame 5 bytes.
    let frame = encode_message(&Message::HeartbeatOk).unwrap();
    assert_eq!(frame.len(), 5);
    assert_eq!(&frame[..4], &[0, 0, 0, 0]);
    assert_eq!(frame[4], type_byte::HEARTBEAT | type_byte::RESPONSE_BIT);
    let frame = encode_message(&Message::Terminate).unwrap();
    assert_eq!(frame, vec![0, 0, 0, 0, 0x14]);
}

#[test]
fn read_block_request_roundtrip() {
    let msg = Message::ReadBlock {
        block: BlockId(7),
        offset: 0,
        len: 1024,
    };
    let decoded = decode_message(&encode_message(&msg).unwrap()).unwrap();
    assert_eq!(decoded, msg);
}

#[test]
fn short_input_is_protocol_error() {
    let err = decode_message(&[0, 0, 1]).unwrap_err();
    assert_eq!(err.code, ErrorCode::ProtocolError);
}

#[test]
fn unknown_type_byte_is_protocol_error() {
    let err = decode_message(&[0, 0, 0, 0, 0xFF]).unwrap_err();
    assert_eq!(err.code, ErrorCode::ProtocolError);
}

#[test]
fn trailing_bytes_rejected() {
    let mut frame = encode_message(&Message::Terminate).unwrap();
    frame.push(0xAB);
    let err = decode_message(&frame).unwrap_err();
    assert_eq!(err.code, ErrorCode::ProtocolError);
}

#[test]
fn truncated_payload_rejected() {
    let frame = encode_message(&Message::Heartbeat {
        node: DatanodeId(42),
    })
    .unwrap();
    let err = decode_message(&frame[..frame.len() - 1]).unwrap_err();
    assert_eq!(err.code, ErrorCode::ProtocolError);
}

#[test]
fn stable_request_type_bytes() {
    let cases: Vec<(Message, u8)> = vec![
        (
            Message::Register {
                address: "a:1".into(),
                capacity_blocks: 1,
                protocol_version: 1,
            },
            0x01,
        ),
        (Message::Heartbeat { node: DatanodeId(1) }, 0x02),
        (
            Message::CreateObject {
                name: ObjectName::new("x").unwrap(),
            },
            0x03,
        ),
        (
            Message::GetMetadata {
                name: ObjectName::new("x").unwrap(),
            },
            0x04,
        ),
        (
            Message::AllocateBlock(AllocateRequest::Destination {
                block: BlockId(1),
                exclude: vec![],
            }),
            0x05,
        ),
        (
            Message::CommitRelocation {
                block: BlockId(1),
                new_node: DatanodeId(1),
                expected_version: 0,
            },
            0x06,
        ),
        (Message::ListBlocksOnNode { node: DatanodeId(1) }, 0x07),
        (
            Message::BeginDrain {
                node: DatanodeId(1),
                deadline_in_ms: 5,
            },
            0x08,
        ),
        (Message::MarkLost { node: DatanodeId(1) }, 0x09),
        (
            Message::DeleteObject {
                name: ObjectName::new("x").unwrap(),
            },
            0x0A,
        ),
        (
            Message::WriteBlock {
                block: BlockId(1),
                offset: 0,
                crc: 0,
                data: vec![],
            },
            0x10,
        ),
        (
            Message::ReadBlock {
                block: BlockId(1),
                offset: 0,
                len: 0,
            },
            0x11,
        ),
        (Message::DeleteBlock { block: BlockId(1) }, 0x12),
        (Message::EnterDraining { deadline_in_ms: 5 }, 0x13),
        (Message::Terminate, 0x14),
        (Message::ErrorResponse(Fault::not_found("x")), 0x7F),
    ];
    for (msg, expected) in cases {
        let frame = encode_message(&msg).unwrap();
        assert_eq!(frame[4], expected, "type byte for {msg:?}");
    }
}
