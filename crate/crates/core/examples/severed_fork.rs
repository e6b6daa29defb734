//! An sFork shares a prefix and then goes its own way.

use bolt::service::{Engine, EngineConfig};
use bolt::Position;

fn main() -> bolt::Result<()> {
    let engine = Engine::in_memory(EngineConfig::default());
    let g = engine.create_root()?;
    for i in 0..5 {
        engine.append(g, format!("g{i}").into_bytes())?;
    }
    // Keep g0..=g2, drop the rest.
    let s = engine.sfork(g, Some(Position(2)), false)?;
    engine.append(g, b"g5".to_vec())?;
    engine.append(s, b"s0".to_vec())?;

    let text = |log| -> bolt::Result<String> {
        let tail = engine.get_tail(log)?.position().expect("visible");
        Ok(engine.read(log, Position(0), tail)?.iter().map(|r| String::from_utf8_lossy(r).into_owned()).collect::<Vec<_>>().join(" "))
    };
    println!("parent: {}", text(g)?);
    println!("sfork:  {}", text(s)?);
    Ok(())
}
