//! Wire-level datanode tests against an in-process namenode for
//! registration. Timing-sensitive cases use real clocks with small payloads.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ess_datanode::{DatanodeConfig, DatanodeHandle};
use ess_namenode::{NamenodeConfig, NamenodeHandle};
use ess_proto::clock::SystemClock;
use ess_proto::crc::crc32;
use ess_proto::net::FramedStream;
use ess_proto::{BlockId, Error, ErrorCode, Message};

const MIB: u32 = 1024 * 1024;

fn cluster(egress: Option<u64>, capacity: u32) -> (NamenodeHandle, DatanodeHandle) {
    let clock = Arc::new(SystemClock::new());
    let nn = ess_namenode::spawn(NamenodeConfig::default(), "127.0.0.1:0", clock.clone()).unwrap();
    let mut cfg = DatanodeConfig::new(nn.addr().to_string(), capacity);
    cfg.egress_limit = egress;
    let dn = ess_datanode::spawn(cfg, clock).unwrap();
    (nn, dn)
}

fn connect(dn: &DatanodeHandle) -> FramedStream {
    FramedStream::connect(dn.addr()).unwrap()
}

fn write(conn: &mut FramedStream, block: u64, data: &[u8]) -> ess_proto::Result<Message> {
    conn.request(&Message::WriteBlock {
        block: BlockId(block),
        offset: 0,
        crc: crc32(data),
        data: data.to_vec(),
    })
}

fn read(conn: &mut FramedStream, block: u64, len: u32) -> ess_proto::Result<(Vec<u8>, u32)> {
    match conn.request(&Message::ReadBlock {
        block: BlockId(block),
        offset: 0,
        len,
    })? {
        Message::ReadBlockOk { crc, data } => Ok((data, crc)),
        other => panic!("unexpected response {other:?}"),
    }
}

#[test]
fn write_then_read_roundtrip() {
    let (_nn, dn) = cluster(None, 8);
    let mut conn = connect(&dn);
    let data: Vec<u8> = (0..1024u32).map(|i| (i % 251) as u8).collect();
    write(&mut conn, 1, &data).unwrap();
    let (got, crc) = read(&mut conn, 1, 1024).unwrap();
    assert_eq!(got, data);
    assert_eq!(crc, crc32(&data));
}

#[test]
fn corrupted_payload_rejected() {
    let (_nn, dn) = cluster(None, 8);
    let mut conn = connect(&dn);
    let data = vec![5u8; 256];
    let err = conn
        .request(&Message::WriteBlock {
            block: BlockId(1),
            offset: 0,
            crc: crc32(&data) ^ 0x1,
            data,
        })
        .unwrap_err();
    assert!(err.is_code(ErrorCode::ProtocolError));
    let err = read(&mut conn, 1, 1).unwrap_err();
    assert!(err.is_code(ErrorCode::NotFound));
}

#[test]
fn draining_rejects_writes_serves_reads_and_deletes() {
    let (_nn, dn) = cluster(None, 8);
    let mut conn = connect(&dn);
    let data = vec![9u8; 512];
    write(&mut conn, 1, &data).unwrap();
    write(&mut conn, 2, &data).unwrap();

    conn.request(&Message::EnterDraining { deadline_in_ms: 30_000 })
        .unwrap();
    let err = write(&mut conn, 3, &data).unwrap_err();
    assert!(err.is_code(ErrorCode::NodeDraining));

    // Reads still flow from a draining node.
    let (got, _) = read(&mut conn, 1, 512).unwrap();
    assert_eq!(got, data);

    // So do deletes; the relocator skips the deleted block later.
    conn.request(&Message::DeleteBlock { block: BlockId(2) })
        .unwrap();
    assert!(read(&mut conn, 2, 1).unwrap_err().is_code(ErrorCode::NotFound));

    // Second drain request conflicts.
    let err = conn
        .request(&Message::EnterDraining { deadline_in_ms: 30_000 })
        .unwrap_err();
    assert!(err.is_code(ErrorCode::Conflict));
}

#[test]
fn delete_is_idempotent_over_wire() {
    let (_nn, dn) = cluster(None, 8);
    let mut conn = connect(&dn);
    let resp = conn
        .request(&Message::DeleteBlock { block: BlockId(77) })
        .unwrap();
    assert_eq!(resp, Message::DeleteBlockOk);
}

#[test]
fn throttled_read_takes_about_rate_time() {
    // 1 MiB block at a 1 MiB/s egress cap reads in ~1s.
    let (_nn, dn) = cluster(Some(MIB as u64), 8);
    let mut conn = connect(&dn);
    let data = vec![0xabu8; MIB as usize];
    write(&mut conn, 1, &data).unwrap();

    let start = std::time::Instant::now();
    let (got, _) = read(&mut conn, 1, MIB).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(got.len(), data.len());
    assert!(
        (0.9..=1.1).contains(&elapsed),
        "throttled read took {elapsed:.3}s"
    );
}

#[test]
fn read_spanning_drain_transition_succeeds() {
    // Slow egress pins the read in flight while the node starts draining.
    let (_nn, dn) = cluster(Some(256 * 1024), 8);
    let mut writer = connect(&dn);
    let data = vec![0x5au8; 512 * 1024];
    write(&mut writer, 1, &data).unwrap();

    let addr = dn.addr();
    let reader = std::thread::spawn(move || {
        let mut conn = FramedStream::connect(addr).unwrap();
        read(&mut conn, 1, 512 * 1024).unwrap()
    });
    // Let the read enter the throttle, then flip the node to draining.
    std::thread::sleep(Duration::from_millis(300));
    writer
        .request(&Message::EnterDraining { deadline_in_ms: 30_000 })
        .unwrap();
    let (got, crc) = reader.join().unwrap();
    assert_eq!(got, data);
    assert_eq!(crc, crc32(&data));
}

#[test]
fn terminate_then_connect_is_refused() {
    let (_nn, dn) = cluster(None, 8);
    let mut conn = connect(&dn);
    let data = vec![1u8; 64];
    write(&mut conn, 1, &data).unwrap();

    conn.send(&Message::Terminate).unwrap();
    // No response; the socket closes.
    assert!(matches!(conn.recv(), Ok(None) | Err(Error::Io(_))));

    // Give the accept loop a moment to drop the listener.
    std::thread::sleep(Duration::from_millis(200));
    assert!(FramedStream::connect(dn.addr()).is_err());
    assert!(dn.store().state().is_terminated());
    assert_eq!(dn.store().block_count(), 0);
}

#[test]
fn terminate_mid_read_surfaces_connection_error() {
    // Glacial egress so the read is parked in the throttle at terminate time.
    let (_nn, dn) = cluster(Some(64 * 1024), 8);
    let mut conn = connect(&dn);
    let data = vec![0x77u8; 512 * 1024];
    write(&mut conn, 1, &data).unwrap();

    let addr = dn.addr();
    let reader = std::thread::spawn(move || {
        let mut conn = FramedStream::connect(addr).unwrap();
        read(&mut conn, 1, 512 * 1024)
    });
    std::thread::sleep(Duration::from_millis(300));
    let mut killer = connect(&dn);
    killer.send(&Message::Terminate).unwrap();

    let result = reader.join().unwrap();
    assert!(matches!(result, Err(Error::Io(_))));
}

#[test]
fn write_barrage_during_drain_never_mutates_store() {
    let (_nn, dn) = cluster(None, 64);
    let mut conn = connect(&dn);
    for block in 0..8u64 {
        let data = vec![block as u8; 4096];
        write(&mut conn, block, &data).unwrap();
    }

    let addr = dn.addr();
    let rejected = Arc::new(AtomicU32::new(0));
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let mut writers = Vec::new();
    for t in 0..16u64 {
        let rejected = rejected.clone();
        let stop = stop.clone();
        writers.push(std::thread::spawn(move || {
            let mut conn = FramedStream::connect(addr).unwrap();
            let mut i = 0u64;
            while !stop.load(Ordering::Relaxed) {
                let data = vec![(t * 31 + i) as u8; 2048];
                let target = 100 + (t * 131 + i) % 24;
                match write(&mut conn, target, &data) {
                    Ok(_) => {}
                    Err(e) => {
                        assert!(e.is_code(ErrorCode::NodeDraining), "unexpected: {e}");
                        rejected.fetch_add(1, Ordering::Relaxed);
                    }
                };
                i += 1;
            }
        }));
    }

    // Flip to draining mid-barrage; every write settling after this point is
    // rejected, so the digest taken here must remain stable.
    std::thread::sleep(Duration::from_millis(30));
    conn.request(&Message::EnterDraining { deadline_in_ms: 30_000 })
        .unwrap();
    let frozen = dn.store().digest();

    // Keep the barrage running against the fence for a while.
    std::thread::sleep(Duration::from_millis(200));
    stop.store(true, Ordering::Relaxed);
    for w in writers {
        w.join().unwrap();
    }
    assert_eq!(dn.store().digest(), frozen);
    assert!(rejected.load(Ordering::Relaxed) > 0, "drain raced past the barrage");
}
