use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{ObjectBuilder, ObjectStore};
use crate::command::{Command, RecordMeta};
use crate::error::{EngineError, Result};
use crate::metastate::ApplyOutcome;
use crate::sequencer::MetadataLayer;
use crate::types::{Assigned, LogId, ObjectRef, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BrokerId(pub u32);

impl fmt::Display for BrokerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BrokerConfig {
    pub flush_bytes: usize,
    pub linger: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig { flush_bytes: 1 << 20, linger: Duration::from_millis(5) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Append,
    Read,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestRecord {
    pub kind: RequestKind,
    pub log: LogId,
}

struct PendingEntry {
    log: LogId,
    payload: Vec<u8>,
    reply: mpsc::Sender<Result<Assigned>>,
}

#[derive(Default)]
struct Pending {
    entries: Vec<PendingEntry>,
    bytes: usize,
    oldest: Option<Instant>,
    shutdown: bool,
}

struct Shared {
    id: BrokerId,
    cfg: BrokerConfig,
    meta: Arc<MetadataLayer>,
    store: Arc<dyn ObjectStore>,
    pending: Mutex<Pending>,
    wake: Condvar,
    requests: Mutex<Vec<RequestRecord>>,
    log_requests: AtomicBool,
}

/// Batches appends from many sessions into multi-log objects, writes each
/// object to the store and only then submits its metadata for sequencing.
pub struct Broker {
    shared: Arc<Shared>,
    flusher: Option<JoinHandle<()>>,
}

impl fmt::Debug for Broker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Broker").field("id", &self.shared.id).finish_non_exhaustive()
    }
}

impl Broker {
    pub fn start(id: BrokerId, cfg: BrokerConfig, meta: Arc<MetadataLayer>, store: Arc<dyn ObjectStore>) -> Broker {
        let shared = Arc::new(Shared {
            id,
            cfg,
            meta,
            store,
            pending: Mutex::new(Pending::default()),
            wake: Condvar::new(),
            requests: Mutex::new(Vec::new()),
            log_requests: AtomicBool::new(true),
        });
        let s = shared.clone();
        let flusher = std::thread::Builder::new().name(format!("flush-{id}")).spawn(move || flush_loop(&s)).expect("spawn flusher");
        Broker { shared, flusher: Some(flusher) }
    }

    pub fn id(&self) -> BrokerId {
        self.shared.id
    }

    fn note(&self, kind: RequestKind, log: LogId) {
        if self.shared.log_requests.load(Ordering::Relaxed) {
            self.shared.requests.lock().expect("request log").push(RequestRecord { kind, log });
        }
    }

    /// Every APPEND and READ this broker has processed, in arrival order.
    pub fn request_log(&self) -> Vec<RequestRecord> {
        self.shared.requests.lock().expect("request log").clone()
    }

    pub fn set_request_logging(&self, on: bool) {
        self.shared.log_requests.store(on, Ordering::Relaxed);
    }

    /// Buffer one record and wait for its sequenced position.
    pub fn append(&self, log: LogId, payload: Vec<u8>) -> Result<Assigned> {
        self.note(RequestKind::Append, log);
        if payload.is_empty() {
            return Err(EngineError::protocol("empty record payload"));
        }
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.shared.pending.lock().expect("pending");
            if p.shutdown {
                return Err(EngineError::storage(format!("broker {} is shut down", self.shared.id)));
            }
            p.bytes += ObjectBuilder::entry_cost(payload.len());
            p.oldest.get_or_insert_with(Instant::now);
            p.entries.push(PendingEntry { log, payload, reply: tx });
        }
        self.shared.wake.notify_one();
        rx.recv().unwrap_or_else(|_| Err(EngineError::storage("broker dropped the append")))
    }

    pub fn read(&self, log: LogId, from: Position, to: Position) -> Result<Vec<Vec<u8>>> {
        self.note(RequestKind::Read, log);
        let refs = self.shared.meta.with_state(|s| s.read_meta(log, from, to))?;
        fetch_coalesced(self.shared.store.as_ref(), &refs)
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.shared.pending.lock().expect("pending").shutdown = true;
        self.shared.wake.notify_all();
        if let Some(h) = self.flusher.take() {
            let _ = h.join();
        }
    }
}

/// One backend fetch per run of consecutive references into the same object.
pub(crate) fn fetch_coalesced(store: &dyn ObjectStore, refs: &[ObjectRef]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::with_capacity(refs.len());
    let mut i = 0;
    while i < refs.len() {
        let id = refs[i].object_id;
        let mut j = i + 1;
        while j < refs.len() && refs[j].object_id == id {
            j += 1;
        }
        let run = &refs[i..j];
        let lo = run.iter().map(|r| r.byte_offset).min().expect("non-empty run");
        let hi = run.iter().map(ObjectRef::end).max().expect("non-empty run");
        let span = store.get_range(id, lo, hi - lo)?;
        for r in run {
            let at = (r.byte_offset - lo) as usize;
            out.push(span[at..at + r.byte_length as usize].to_vec());
        }
        i = j;
    }
    Ok(out)
}

fn flush_loop(s: &Shared) {
    loop {
        let batch = {
            let mut p = s.pending.lock().expect("pending");
            loop {
                if !p.entries.is_empty() {
                    let age = p.oldest.map_or(Duration::ZERO, |t| t.elapsed());
                    if p.shutdown || p.bytes >= s.cfg.flush_bytes || age >= s.cfg.linger {
                        break;
                    }
                    p = s.wake.wait_timeout(p, s.cfg.linger - age).expect("pending").0;
                } else if p.shutdown {
                    return;
                } else {
                    p = s.wake.wait(p).expect("pending");
                }
            }
            p.bytes = 0;
            p.oldest = None;
            std::mem::take(&mut p.entries)
        };
        flush(s, batch);
    }
}

fn flush(s: &Shared, batch: Vec<PendingEntry>) {
    let mut obj = ObjectBuilder::new();
    let records: Vec<RecordMeta> = batch
        .iter()
        .map(|e| RecordMeta { log: e.log, byte_offset: obj.push(e.log, &e.payload), byte_length: e.payload.len() as u32 })
        .collect();
    let result = s
        .store
        .put_object(&obj.finish())
        .map_err(|e| EngineError::storage(format!("object write failed: {}", e.detail)))
        .and_then(|object_id| s.meta.submit(Command::SequenceBatch { object_id, records }));
    match result {
        Ok(ApplyOutcome::Sequenced(positions)) => {
            for (e, pos) in batch.into_iter().zip(positions) {
                let _ = e.reply.send(Ok(pos));
            }
        }
        Ok(other) => {
            let err = EngineError::protocol(format!("unexpected outcome {other:?}"));
            batch.into_iter().for_each(|e| drop(e.reply.send(Err(err.clone()))));
        }
        Err(err) => {
            log::debug!("broker {}: batch of {} failed: {err}", s.id, batch.len());
            batch.into_iter().for_each(|e| drop(e.reply.send(Err(err.clone()))));
        }
    }
}
