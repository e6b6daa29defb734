//! Create a log, append a few records and read them back, all in process.

use bolt::service::{Engine, EngineConfig};
use bolt::Position;

fn main() -> bolt::Result<()> {
    let engine = Engine::in_memory(EngineConfig::default());
    let log = engine.create_root()?;
    for word in ["alpha", "beta", "gamma"] {
        let at = engine.append(log, word.as_bytes().to_vec())?;
        println!("appended {word:<6} at {at}");
    }
    let tail = engine.get_tail(log)?;
    println!("tail is {tail}");
    for (i, rec) in engine.read(log, Position(0), Position(3))?.iter().enumerate() {
        println!("{i}: {}", String::from_utf8_lossy(rec));
    }
    Ok(())
}
