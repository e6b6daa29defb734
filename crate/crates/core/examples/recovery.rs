//! Durable metadata: a command log on disk, snapshots, and replay on restart.

use std::sync::Arc;

use bolt::seqlog::FileCommandLog;
use bolt::service::{Engine, EngineConfig};
use bolt::store::FsStore;
use bolt::Position;

fn open(dir: &std::path::Path) -> bolt::Result<Engine> {
    let store = Arc::new(FsStore::open(dir.join("objects"))?);
    let log = Box::new(FileCommandLog::open(dir.join("commands.log"))?);
    Engine::open(EngineConfig::default(), store, log)
}

fn main() -> bolt::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    let before = {
        let engine = open(dir.path())?;
        let g = engine.create_root()?;
        for i in 0..10 {
            engine.append(g, format!("r{i}").into_bytes())?;
        }
        let seq = engine.snapshot(true)?;
        println!("snapshot at command {seq}, log truncated");
        let f = engine.cfork(g, false, false)?;
        engine.append(f, b"after-snapshot".to_vec())?;
        engine.fingerprint()
    };

    let engine = open(dir.path())?;
    let rec = engine.recovery();
    println!("recovered: snapshot {:?}, replayed {} commands", rec.snapshot_seq, rec.replayed);
    assert_eq!(engine.fingerprint(), before);
    let f = bolt::LogId(2);
    let last = engine.read(f, Position(10), Position(11))?;
    println!("fork record 10 = {}", String::from_utf8_lossy(&last[0]));
    Ok(())
}
