//! Replay one random history against the lazy engine and both oracles.

use bolt::harness::bench::differential;
use bolt::harness::Variant;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    match differential(seed, 5_000, &Variant::ALL) {
        Ok(run) => {
            println!("seed {seed}: {} ops agree, {} forks, depth {}", run.report.ops, run.forks_created, run.max_depth);
            for (code, n) in &run.report.errors {
                println!("  {code:<24} {n}");
            }
        }
        Err(d) => {
            eprintln!("{d}");
            std::process::exit(1);
        }
    }
}
