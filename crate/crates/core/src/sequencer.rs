//! The single metadata layer: every command is made durable in the command
//! log and then applied, all under one lock, so command-log order is apply
//! order. Queries take the same lock.

use std::sync::{Arc, Mutex, MutexGuard};

use crate::command::Command;
use crate::error::{EngineError, Result};
use crate::ltt::LazyTailTree;
use crate::metastate::{ApplyOutcome, ForestState, StateImage};
use crate::seqlog::{CommandLog, MemCommandLog, Snapshot};

type Observer = Arc<dyn Fn(u64, &Command) + Send + Sync>;

struct Inner {
    state: ForestState,
    log: Box<dyn CommandLog>,
    applied: u64,
}

pub struct MetadataLayer {
    inner: Mutex<Inner>,
    observer: Mutex<Option<Observer>>,
}

/// What recovery did on open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recovery {
    pub snapshot_seq: Option<u64>,
    pub replayed: u64,
}

fn fingerprint_bytes(hex_fp: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    hex::decode_to_slice(hex_fp, &mut out).expect("fingerprint is 32 hex bytes");
    out
}

impl MetadataLayer {
    pub fn in_memory() -> Self {
        Self::open(Box::new(MemCommandLog::new())).expect("empty in-memory log").0
    }

    /// Load the latest snapshot, then replay every later command.
    pub fn open(mut log: Box<dyn CommandLog>) -> Result<(Self, Recovery)> {
        let mut recovery = Recovery::default();
        let mut state = ForestState::new();
        let mut applied = 0;
        if let Some(snap) = log.load_snapshot()? {
            let image: StateImage =
                serde_json::from_slice(&snap.blob).map_err(|e| EngineError::protocol(format!("snapshot state: {e}")))?;
            state = ForestState::from_image(&image, LazyTailTree::new())?;
            if fingerprint_bytes(&state.fingerprint()) != snap.fingerprint {
                return Err(EngineError::protocol("snapshot fingerprint does not match its state"));
            }
            applied = snap.seq;
            recovery.snapshot_seq = Some(snap.seq);
        }
        recovery.replayed = log.replay(applied + 1, &mut |seq, cmd| {
            // Commands that failed originally fail identically again.
            let _ = state.apply(&cmd);
            applied = seq;
            Ok(())
        })?;
        let inner = Inner { state, log, applied };
        Ok((MetadataLayer { inner: Mutex::new(inner), observer: Mutex::new(None) }, recovery))
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Called with every command after it is durable and before it is applied.
    pub fn set_observer(&self, f: impl Fn(u64, &Command) + Send + Sync + 'static) {
        *self.observer.lock().expect("observer lock") = Some(Arc::new(f));
    }

    pub fn submit(&self, cmd: Command) -> Result<ApplyOutcome> {
        let observer = self.observer.lock().expect("observer lock").clone();
        let mut inner = self.lock();
        let seq = inner.log.append_command(&cmd).map_err(|e| EngineError::storage(e.detail))?;
        if let Some(f) = observer {
            f(seq, &cmd);
        }
        inner.applied = seq;
        inner.state.apply(&cmd)
    }

    pub fn with_state<R>(&self, f: impl FnOnce(&ForestState) -> R) -> R {
        f(&self.lock().state)
    }

    pub fn applied_seq(&self) -> u64 {
        self.lock().applied
    }

    pub fn fingerprint(&self) -> String {
        self.lock().state.fingerprint()
    }

    /// Write a snapshot at the current sequence number, optionally dropping
    /// the commands it covers.
    pub fn snapshot(&self, truncate: bool) -> Result<u64> {
        let mut inner = self.lock();
        let blob = serde_json::to_vec(&inner.state.image()).map_err(|e| EngineError::storage(format!("snapshot encode: {e}")))?;
        let fp = inner.state.fingerprint();
        let snap = Snapshot { seq: inner.applied, fingerprint: fingerprint_bytes(&fp), blob };
        inner.log.save_snapshot(&snap)?;
        if truncate {
            let seq = snap.seq;
            inner.log.truncate(seq)?;
        }
        Ok(snap.seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::RecordMeta;
    use crate::seqlog::FileCommandLog;
    use crate::types::{LogId, ObjectId};

    fn batch(log: LogId) -> Command {
        Command::SequenceBatch { object_id: ObjectId([1; 16]), records: vec![RecordMeta { log, byte_offset: 12, byte_length: 4 }] }
    }

    #[test]
    fn restart_replays_to_the_same_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.log");
        let fp = {
            let (m, _) = MetadataLayer::open(Box::new(FileCommandLog::open(&path).unwrap())).unwrap();
            let r = m.submit(Command::CreateRoot).unwrap().created().unwrap();
            m.submit(batch(r)).unwrap();
            m.submit(Command::CreateCFork { parent: r, promotable: true }).unwrap();
            assert!(m.submit(Command::Squash { log: r }).is_err());
            m.submit(batch(r)).unwrap();
            m.fingerprint()
        };
        let (m, rec) = MetadataLayer::open(Box::new(FileCommandLog::open(&path).unwrap())).unwrap();
        assert_eq!(rec.replayed, 5);
        assert_eq!(m.fingerprint(), fp);
        m.snapshot(true).unwrap();
        m.submit(batch(LogId(1))).unwrap();
        let fp2 = m.fingerprint();
        drop(m);
        let (m, rec) = MetadataLayer::open(Box::new(FileCommandLog::open(&path).unwrap())).unwrap();
        assert_eq!(rec, Recovery { snapshot_seq: Some(5), replayed: 1 });
        assert_eq!(m.fingerprint(), fp2);
    }

    #[test]
    fn empty_snapshot_round_trip() {
        let m = MetadataLayer::in_memory();
        let fp = m.fingerprint();
        assert_eq!(m.snapshot(true).unwrap(), 0);
        assert_eq!(m.fingerprint(), fp);
    }
}
