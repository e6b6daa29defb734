//! Speculate on a promotable fork, then either promote it into the parent
//! or throw it away.

use bolt::service::{Engine, EngineConfig};
use bolt::{LogId, Position};

fn text(engine: &Engine, log: LogId) -> String {
    let tail = engine.get_tail(log).unwrap().position().unwrap();
    engine.read(log, Position(0), tail).unwrap().iter().map(|r| String::from_utf8_lossy(r).into_owned()).collect::<Vec<_>>().join(" ")
}

fn main() -> bolt::Result<()> {
    let engine = Engine::in_memory(EngineConfig::default());
    let g = engine.create_root()?;
    engine.append(g, b"plan".to_vec())?;

    // Two agents try alternatives.
    let a = engine.cfork(g, true, false)?;
    let b = engine.cfork(g, true, false)?;
    engine.append(a, b"try-a".to_vec())?;
    engine.append(b, b"try-b".to_vec())?;
    engine.append(g, b"observed".to_vec())?; // withheld until a fork resolves

    let lost = engine.promote(a)?;
    println!("promoted {a}; squashed {lost:?}");
    println!("parent now: {}", text(&engine, g));
    match engine.promote(b) {
        Err(e) => println!("promote {b}: {e}"),
        Ok(_) => unreachable!("only one sibling can win"),
    }

    // Squash discards a fork and everything under it.
    let c = engine.cfork(g, true, false)?;
    let d = engine.cfork(c, false, false)?;
    engine.append(d, b"scratch".to_vec())?;
    println!("squash {c}: removed {:?}", engine.squash(c)?);
    println!("parent after squash: {}", text(&engine, g));
    Ok(())
}
