//! `boltd` and `boltctl`. Flags beat `BOLT_*` environment variables, which
//! beat defaults.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::error::{EngineError, Result};
use crate::seqlog::{CommandLog, FileCommandLog, MemCommandLog};
use crate::store::{BrokerConfig, FsStore, MemStore, ObjectStore};
use crate::types::{Assigned, LogId, Position};

use super::{Client, Engine, EngineConfig, Server};

#[derive(Debug, Parser)]
#[command(name = "boltd", about = "Run a log server")]
pub struct DaemonArgs {
    #[arg(long, env = "BOLT_LISTEN", default_value = "127.0.0.1:7878")]
    pub listen: String,
    /// `mem` or `fs:<dir>`
    #[arg(long, env = "BOLT_STORE", default_value = "mem")]
    pub store: String,
    /// Command log file; in-memory when omitted.
    #[arg(long, env = "BOLT_CMDLOG")]
    pub cmdlog: Option<PathBuf>,
    #[arg(long, env = "BOLT_BROKERS", default_value_t = 2)]
    pub brokers: usize,
    #[arg(long, env = "BOLT_FORK_BROKERS", default_value_t = 2)]
    pub fork_brokers: usize,
    #[arg(long, env = "BOLT_FLUSH_BYTES", default_value_t = 1 << 20)]
    pub flush_bytes: usize,
    #[arg(long, env = "BOLT_LINGER_MS", default_value_t = 5)]
    pub linger_ms: u64,
    #[arg(long, env = "BOLT_CACHE_BYTES", default_value_t = 64 << 20)]
    pub cache_bytes: usize,
}

impl DaemonArgs {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            root_brokers: self.brokers,
            fork_brokers: self.fork_brokers,
            broker: BrokerConfig { flush_bytes: self.flush_bytes, linger: Duration::from_millis(self.linger_ms) },
            cache_bytes: self.cache_bytes,
        }
    }

    pub fn open_engine(&self) -> Result<Engine> {
        let store: Arc<dyn ObjectStore> = match self.store.as_str() {
            "mem" => Arc::new(MemStore::new()),
            s => match s.strip_prefix("fs:") {
                Some(dir) => Arc::new(FsStore::open(dir)?),
                None => return Err(EngineError::protocol(format!("unknown store {s:?}, expected mem or fs:<dir>"))),
            },
        };
        let log: Box<dyn CommandLog> = match &self.cmdlog {
            Some(p) => Box::new(FileCommandLog::open(p)?),
            None => Box::new(MemCommandLog::new()),
        };
        Engine::open(self.engine_config(), store, log)
    }
}

pub fn run_daemon(args: &DaemonArgs) -> Result<()> {
    let engine = Arc::new(args.open_engine()?);
    let rec = engine.recovery();
    let server = Server::start(engine, &args.listen)?;
    eprintln!("boltd listening on {} (snapshot {:?}, replayed {} commands)", server.local_addr(), rec.snapshot_seq, rec.replayed);
    server.join();
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "boltctl", about = "Talk to a log server")]
pub struct CtlArgs {
    #[arg(long, env = "BOLT_SERVER", default_value = "127.0.0.1:7878")]
    pub server: String,
    #[command(subcommand)]
    pub cmd: CtlCommand,
}

#[derive(Debug, Subcommand)]
pub enum CtlCommand {
    /// Create a root log
    Create,
    /// Append one record read from --file or stdin
    Append {
        #[arg(long)]
        log: u64,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Read records [from, to); `to` defaults to the tail
    Read {
        #[arg(long)]
        log: u64,
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long)]
        to: Option<u64>,
        /// One hex line per record instead of raw bytes
        #[arg(long)]
        hex: bool,
    },
    Cfork {
        #[arg(long)]
        log: u64,
        #[arg(long)]
        promotable: bool,
        #[arg(long)]
        dedicated: bool,
    },
    Sfork {
        #[arg(long)]
        log: u64,
        #[arg(long)]
        past: Option<u64>,
        #[arg(long)]
        dedicated: bool,
    },
    Promote {
        #[arg(long)]
        log: u64,
    },
    Squash {
        #[arg(long)]
        log: u64,
    },
    Tail {
        #[arg(long)]
        log: u64,
    },
    Describe,
}

fn ids(ls: &[LogId]) -> String {
    ls.iter().map(|l| l.0.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run_ctl(args: &CtlArgs, input: &mut dyn Read, out: &mut dyn Write) -> Result<()> {
    let c = Client::connect(args.server.as_str())?;
    match &args.cmd {
        CtlCommand::Create => writeln!(out, "{}", c.create_root()?.0)?,
        CtlCommand::Append { log, file } => {
            let payload = match file {
                Some(p) => std::fs::read(p)?,
                None => {
                    let mut b = Vec::new();
                    input.read_to_end(&mut b)?;
                    b
                }
            };
            writeln!(out, "{}", c.append(LogId(*log), payload)?)?;
        }
        CtlCommand::Read { log, from, to, hex } => {
            let to = match to {
                Some(t) => *t,
                None => match c.get_tail(LogId(*log))? {
                    Assigned::At(p) => p.0,
                    Assigned::Withheld => return Err(EngineError::protocol("tail is withheld by a promotable fork; pass --to")),
                },
            };
            for rec in c.read(LogId(*log), Position(*from), Position(to))? {
                if *hex {
                    writeln!(out, "{}", hex::encode(&rec))?;
                } else {
                    out.write_all(&rec)?;
                }
            }
        }
        CtlCommand::Cfork { log, promotable, dedicated } => writeln!(out, "{}", c.cfork_with(LogId(*log), *promotable, *dedicated)?.0)?,
        CtlCommand::Sfork { log, past, dedicated } => writeln!(out, "{}", c.sfork_with(LogId(*log), past.map(Position), *dedicated)?.0)?,
        CtlCommand::Promote { log } => writeln!(out, "squashed: {}", ids(&c.promote(LogId(*log))?))?,
        CtlCommand::Squash { log } => writeln!(out, "squashed: {}", ids(&c.squash(LogId(*log))?))?,
        CtlCommand::Tail { log } => writeln!(out, "{}", c.get_tail(LogId(*log))?)?,
        CtlCommand::Describe => {
            writeln!(out, "{:>6} {:<5} {:>6} {:>8} {:<10} {:<13} tail", "id", "kind", "parent", "fork_pt", "promotable", "status")?;
            for info in c.describe()? {
                let d = info.descriptor;
                writeln!(
                    out,
                    "{:>6} {:<5} {:>6} {:>8} {:<10} {:<13} {}",
                    d.id.0,
                    format!("{:?}", d.kind).to_lowercase(),
                    d.parent.map_or("-".into(), |p| p.0.to_string()),
                    d.fork_point.map_or("-".into(), |p| p.0.to_string()),
                    d.promotable,
                    format!("{:?}", d.status).to_lowercase(),
                    info.tail.map_or("-".into(), |t| t.to_string()),
                )?;
            }
        }
    }
    Ok(())
}
