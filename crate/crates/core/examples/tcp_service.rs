//! Run the server on a loopback port and drive it with two clients.

use std::sync::Arc;
use std::thread;

use bolt::service::{Client, Engine, EngineConfig, Server};
use bolt::Position;

fn main() -> bolt::Result<()> {
    let engine = Arc::new(Engine::in_memory(EngineConfig::default()));
    let server = Server::start(engine.clone(), "127.0.0.1:0")?;
    let addr = server.local_addr();
    println!("listening on {addr}");

    let admin = Client::connect(addr)?;
    let root = admin.create_root()?;
    let fork = admin.cfork(root, false)?;

    let writers: Vec<_> = [root, fork]
        .into_iter()
        .map(|log| {
            thread::spawn(move || {
                let c = Client::connect(addr).unwrap();
                for i in 0..50 {
                    c.append(log, format!("{log}-{i}")).unwrap();
                }
            })
        })
        .collect();
    for w in writers {
        w.join().unwrap();
    }

    let tail = admin.get_tail(fork)?.position().unwrap();
    let recs = admin.read(fork, Position(0), tail)?;
    println!(
        "fork holds {} records; first {:?}, last {:?}",
        recs.len(),
        String::from_utf8_lossy(&recs[0]),
        String::from_utf8_lossy(&recs[recs.len() - 1])
    );
    for b in engine.brokers() {
        println!("broker {} served {} requests", b.id(), b.request_log().len());
    }
    server.shutdown();
    Ok(())
}
