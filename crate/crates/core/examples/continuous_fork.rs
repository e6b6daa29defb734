//! A cFork keeps receiving its parent's appends, interleaved with its own.

use bolt::service::{Engine, EngineConfig};
use bolt::{LogId, Position};

fn show(engine: &Engine, log: LogId) -> bolt::Result<()> {
    let tail = engine.get_tail(log)?.position().expect("not withheld");
    let recs: Vec<String> = engine.read(log, Position(0), tail)?.iter().map(|r| String::from_utf8_lossy(r).into_owned()).collect();
    println!("{log}: {}", recs.join(" "));
    Ok(())
}

fn main() -> bolt::Result<()> {
    let engine = Engine::in_memory(EngineConfig::default());
    let g = engine.create_root()?;
    engine.append(g, b"g0".to_vec())?;

    let r = engine.cfork(g, false, false)?;
    engine.append(r, b"r0".to_vec())?;
    engine.append(g, b"g1".to_vec())?;

    // A fork of the fork inherits from both ancestors.
    let b = engine.cfork(r, false, false)?;
    engine.append(g, b"g2".to_vec())?;
    engine.append(b, b"b0".to_vec())?;

    for log in [g, r, b] {
        show(&engine, log)?;
    }
    // The fork's index only holds its own records; inherited ones resolve upward.
    engine.metadata().with_state(|s| {
        for log in [g, r, b] {
            let tail = s.raw_tail(log).unwrap();
            let steps: Vec<u32> = (0..tail.0).map(|p| s.resolve(log, Position(p)).unwrap().steps).collect();
            println!("{log} lookup hops per position: {steps:?}");
        }
    });
    Ok(())
}
