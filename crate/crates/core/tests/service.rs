use std::io::Write;
use std::net::TcpStream;
use std::sync::Arc;

use bolt::seqlog::FileCommandLog;
use bolt::service::wire::{read_frame, Frame, Request, RequestFrame, ResponseFrame};
use bolt::service::{Client, Engine, EngineConfig, Server};
use bolt::store::{CachedStore, FsStore, MemStore, ObjectBuilder, ObjectStore};
use bolt::{Assigned, ErrorCode, LogId, LogStatus, Position};

fn open(dir: &std::path::Path) -> Engine {
    let store = Arc::new(FsStore::open(dir.join("objects")).unwrap());
    let log = Box::new(FileCommandLog::open(dir.join("commands.log")).unwrap());
    Engine::open(EngineConfig::default(), store, log).unwrap()
}

#[test]
fn data_and_forest_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (root, fork, sf, fp_before) = {
        let engine = Arc::new(open(dir.path()));
        let server = Server::start(engine.clone(), "127.0.0.1:0").unwrap();
        let c = Client::connect(server.local_addr()).unwrap();
        let root = c.create_root().unwrap();
        for i in 0..20 {
            c.append(root, format!("root-{i}")).unwrap();
        }
        let fork = c.cfork(root, false).unwrap();
        c.append(fork, "fork-0").unwrap();
        c.append(root, "root-20").unwrap();
        let sf = c.sfork(root, Some(Position(4))).unwrap();
        c.append(sf, "sfork-0").unwrap();
        let fp = engine.fingerprint();
        drop(c);
        server.shutdown();
        (root, fork, sf, fp)
    };

    let engine = Arc::new(open(dir.path()));
    assert_eq!(engine.fingerprint(), fp_before);
    let server = Server::start(engine.clone(), "127.0.0.1:0").unwrap();
    let c = Client::connect(server.local_addr()).unwrap();
    let text = |log: LogId| -> Vec<String> {
        let tail = c.get_tail(log).unwrap().position().unwrap();
        c.read(log, Position(0), tail).unwrap().into_iter().map(|b| String::from_utf8(b).unwrap()).collect()
    };
    let fork_seq = text(fork);
    assert_eq!(fork_seq.len(), 22);
    assert_eq!(fork_seq[20], "fork-0");
    assert_eq!(fork_seq[21], "root-20");
    assert_eq!(text(sf), ["root-0", "root-1", "root-2", "root-3", "root-4", "sfork-0"]);
    assert_eq!(text(root).len(), 21);
    // New appends after restart land after the replayed tail.
    assert_eq!(c.append(root, "after").unwrap(), Assigned::At(Position(21)));
    assert_eq!(text(fork).last().unwrap(), "after");
    server.shutdown();
}

#[test]
fn malformed_frame_gets_protocol_error_and_connection_survives() {
    let engine = Arc::new(Engine::in_memory(EngineConfig::default()));
    let server = Server::start(engine, "127.0.0.1:0").unwrap();
    let mut s = TcpStream::connect(server.local_addr()).unwrap();

    // Valid header, unknown opcode.
    let mut bad = Vec::new();
    bad.extend_from_slice(&9u32.to_be_bytes());
    bad.extend_from_slice(&77u64.to_be_bytes());
    bad.push(0xfe);
    s.write_all(&bad).unwrap();
    let Some(Frame::Body(body)) = read_frame(&mut s).unwrap() else { panic!("no reply") };
    let reply = ResponseFrame::decode(&body).unwrap();
    assert_eq!(reply.req_id, 77);
    assert_eq!(reply.result.unwrap_err().code, ErrorCode::ProtocolError);

    // Truncated body for a known opcode.
    let mut short = RequestFrame { req_id: 78, request: Request::GetTail { log: LogId(1) } }.encode();
    short.truncate(short.len() - 3);
    let len = (short.len() - 4) as u32;
    short[..4].copy_from_slice(&len.to_be_bytes());
    s.write_all(&short).unwrap();
    let Some(Frame::Body(body)) = read_frame(&mut s).unwrap() else { panic!("no reply") };
    assert_eq!(ResponseFrame::decode(&body).unwrap().result.unwrap_err().code, ErrorCode::ProtocolError);

    // Same connection still works.
    s.write_all(&RequestFrame { req_id: 79, request: Request::CreateRoot }.encode()).unwrap();
    let Some(Frame::Body(body)) = read_frame(&mut s).unwrap() else { panic!("no reply") };
    let ok = ResponseFrame::decode(&body).unwrap();
    assert_eq!(ok.req_id, 79);
    assert!(ok.result.is_ok());
    server.shutdown();
}

#[test]
fn error_codes_cross_the_wire() {
    let engine = Arc::new(Engine::in_memory(EngineConfig::default()));
    let server = Server::start(engine, "127.0.0.1:0").unwrap();
    let c = Client::connect(server.local_addr()).unwrap();
    let g = c.create_root().unwrap();
    c.append(g, "a").unwrap();
    let p = c.cfork(g, true).unwrap();
    assert_eq!(c.append(g, "b").unwrap(), Assigned::Withheld);
    let e = c.read(g, Position(0), Position(2)).unwrap_err();
    assert_eq!((e.code, e.boundary), (ErrorCode::BlockedByPromotableFork, Some(Position(1))));
    assert_eq!(c.squash(g).unwrap_err().code, ErrorCode::SquashRootForbidden);
    assert_eq!(c.promote(g).unwrap_err().code, ErrorCode::NotPromotable);
    assert_eq!(c.get_tail(LogId(999)).unwrap_err().code, ErrorCode::UnknownLog);
    assert_eq!(c.append(g, Vec::<u8>::new()).unwrap_err().code, ErrorCode::ProtocolError);
    c.squash(p).unwrap();
    assert_eq!(c.append(p, "x").unwrap_err().code, ErrorCode::LogSquashed);
    assert_eq!(c.read(g, Position(0), Position(2)).unwrap(), vec![b"a".to_vec(), b"b".to_vec()]);
    let info = c.describe().unwrap();
    assert_eq!(info.iter().find(|i| i.descriptor.id == p).unwrap().descriptor.status, LogStatus::Squashed);
    server.shutdown();
}

#[test]
fn cache_is_transparent() {
    let inner: Arc<dyn ObjectStore> = Arc::new(MemStore::new());
    let cached = CachedStore::new(inner.clone(), 1 << 20);
    let mut ids = Vec::new();
    for k in 0..8u8 {
        let mut b = ObjectBuilder::new();
        b.push(LogId(1), &vec![k; 100 + k as usize]);
        ids.push(cached.put_object(&b.finish()).unwrap());
    }
    let expected: Vec<_> = ids.iter().map(|id| inner.get_object(*id).unwrap()).collect();
    let before = inner.backend_reads();
    for _ in 0..5 {
        for (id, want) in ids.iter().zip(&expected) {
            assert_eq!(&cached.get_object(*id).unwrap(), want);
            assert_eq!(cached.get_range(*id, 12, 20).unwrap(), want[12..32].to_vec());
        }
    }
    // One miss per object, then all hits.
    assert_eq!(inner.backend_reads() - before, ids.len() as u64);

    let tiny = CachedStore::new(inner.clone(), 0);
    for id in &ids {
        assert_eq!(tiny.get_object(*id).unwrap(), inner.get_object(*id).unwrap());
    }
}
