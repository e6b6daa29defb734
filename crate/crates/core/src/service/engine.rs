use std::sync::{Arc, Mutex, MutexGuard};

use crate::command::Command;
use crate::error::{EngineError, Result};
use crate::metastate::{ApplyOutcome, LogInfo};
use crate::seqlog::{CommandLog, MemCommandLog};
use crate::sequencer::{MetadataLayer, Recovery};
use crate::store::{Broker, BrokerConfig, BrokerId, CachedStore, MemStore, ObjectStore};
use crate::types::{Assigned, LogId, LogKind, Position};

use super::placement::BrokerPool;

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub root_brokers: usize,
    pub fork_brokers: usize,
    pub broker: BrokerConfig,
    pub cache_bytes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { root_brokers: 2, fork_brokers: 2, broker: BrokerConfig::default(), cache_bytes: 64 << 20 }
    }
}

/// Metadata layer, object store and broker pool wired together: the full
/// log interface in one process.
pub struct Engine {
    meta: Arc<MetadataLayer>,
    store: Arc<dyn ObjectStore>,
    cfg: EngineConfig,
    pool: Mutex<BrokerPool>,
    recovery: Recovery,
}

impl Engine {
    pub fn in_memory(cfg: EngineConfig) -> Engine {
        Self::open(cfg, Arc::new(MemStore::new()), Box::new(MemCommandLog::new())).expect("in-memory engine")
    }

    pub fn open(cfg: EngineConfig, store: Arc<dyn ObjectStore>, log: Box<dyn CommandLog>) -> Result<Engine> {
        let (meta, recovery) = MetadataLayer::open(log)?;
        let meta = Arc::new(meta);
        let store: Arc<dyn ObjectStore> = Arc::new(CachedStore::new(store, cfg.cache_bytes));
        let pool = BrokerPool::new(cfg.root_brokers, cfg.fork_brokers, |id| Broker::start(id, cfg.broker, meta.clone(), store.clone()));
        let engine = Engine { meta, store, cfg, pool: Mutex::new(pool), recovery };
        engine.restore_placement();
        Ok(engine)
    }

    fn restore_placement(&self) {
        let logs: Vec<(LogId, LogKind, Option<LogId>)> =
            self.meta.with_state(|s| s.descriptors().filter(|d| d.is_live()).map(|d| (d.id, d.kind, s.root_of(d.id))).collect());
        let mut pool = self.pool();
        for (log, kind, root) in logs {
            match kind {
                LogKind::Root => {
                    pool.place_root(log);
                }
                _ => {
                    pool.place_fork(log, root.unwrap_or(log), false, |_| unreachable!("shared placement"));
                }
            }
        }
    }

    fn pool(&self) -> MutexGuard<'_, BrokerPool> {
        self.pool.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn metadata(&self) -> &Arc<MetadataLayer> {
        &self.meta
    }

    pub fn store(&self) -> &Arc<dyn ObjectStore> {
        &self.store
    }

    pub fn recovery(&self) -> Recovery {
        self.recovery
    }

    pub fn brokers(&self) -> Vec<Arc<Broker>> {
        self.pool().brokers().to_vec()
    }

    pub fn broker_of(&self, log: LogId) -> Option<BrokerId> {
        self.pool().broker_of(log).map(|b| b.id())
    }

    fn route(&self, log: LogId) -> Result<Arc<Broker>> {
        self.pool().broker_of(log).cloned().ok_or_else(|| EngineError::unknown_log(log))
    }

    fn created(outcome: ApplyOutcome) -> Result<LogId> {
        outcome.created().ok_or_else(|| EngineError::protocol(format!("unexpected outcome {outcome:?}")))
    }

    fn place_new(&self, log: LogId, dedicated: bool) {
        let root = self.meta.with_state(|s| s.root_of(log)).unwrap_or(log);
        let (cfg, meta, store) = (self.cfg.broker, self.meta.clone(), self.store.clone());
        self.pool().place_fork(log, root, dedicated, |id| Broker::start(id, cfg, meta, store));
    }

    pub fn create_root(&self) -> Result<LogId> {
        let log = Self::created(self.meta.submit(Command::CreateRoot)?)?;
        self.pool().place_root(log);
        Ok(log)
    }

    pub fn append(&self, log: LogId, payload: Vec<u8>) -> Result<Assigned> {
        self.route(log)?.append(log, payload)
    }

    pub fn read(&self, log: LogId, from: Position, to: Position) -> Result<Vec<Vec<u8>>> {
        self.route(log)?.read(log, from, to)
    }

    pub fn cfork(&self, parent: LogId, promotable: bool, dedicated: bool) -> Result<LogId> {
        let log = Self::created(self.meta.submit(Command::CreateCFork { parent, promotable })?)?;
        self.place_new(log, dedicated);
        Ok(log)
    }

    pub fn sfork(&self, parent: LogId, past: Option<Position>, dedicated: bool) -> Result<LogId> {
        let log = Self::created(self.meta.submit(Command::CreateSFork { parent, past })?)?;
        self.place_new(log, dedicated);
        Ok(log)
    }

    /// Returns the logs squashed because this promote won.
    pub fn promote(&self, child: LogId) -> Result<Vec<LogId>> {
        match self.meta.submit(Command::Promote { child })? {
            ApplyOutcome::Promoted { squashed } => Ok(squashed),
            other => Err(EngineError::protocol(format!("unexpected outcome {other:?}"))),
        }
    }

    pub fn squash(&self, log: LogId) -> Result<Vec<LogId>> {
        match self.meta.submit(Command::Squash { log })? {
            ApplyOutcome::Squashed(ids) => Ok(ids),
            other => Err(EngineError::protocol(format!("unexpected outcome {other:?}"))),
        }
    }

    pub fn get_tail(&self, log: LogId) -> Result<Assigned> {
        self.meta.with_state(|s| s.get_tail(log))
    }

    pub fn describe(&self) -> Vec<LogInfo> {
        self.meta.with_state(|s| s.describe())
    }

    pub fn fingerprint(&self) -> String {
        self.meta.fingerprint()
    }

    pub fn snapshot(&self, truncate: bool) -> Result<u64> {
        self.meta.snapshot(truncate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ErrorCode;

    fn engine() -> Engine {
        Engine::in_memory(EngineConfig {
            broker: BrokerConfig { linger: std::time::Duration::from_millis(1), ..Default::default() },
            ..Default::default()
        })
    }

    #[test]
    fn nested_fork_trace_through_brokers() {
        let e = engine();
        let g = e.create_root().unwrap();
        e.append(g, b"g0".to_vec()).unwrap();
        let r = e.cfork(g, false, false).unwrap();
        e.append(r, b"r0".to_vec()).unwrap();
        e.append(g, b"g1".to_vec()).unwrap();
        e.append(r, b"r1".to_vec()).unwrap();
        e.append(g, b"g2".to_vec()).unwrap();
        let got = e.read(r, Position(0), Position(5)).unwrap();
        assert_eq!(got, [b"g0", b"r0", b"g1", b"r1", b"g2"].map(|x| x.to_vec()).to_vec());
    }

    #[test]
    fn placement_rules() {
        let e = engine();
        let a = e.create_root().unwrap();
        let b = e.create_root().unwrap();
        assert_ne!(e.broker_of(a), e.broker_of(b));
        let f1 = e.cfork(a, false, false).unwrap();
        let f2 = e.cfork(a, true, false).unwrap();
        assert_ne!(e.broker_of(f1), e.broker_of(a));
        assert_eq!(e.broker_of(f1), e.broker_of(f2));
        let d = e.cfork(a, false, true).unwrap();
        let db = e.broker_of(d).unwrap();
        let hosted: Vec<LogId> = [a, b, f1, f2, d].into_iter().filter(|l| e.broker_of(*l) == Some(db)).collect();
        assert_eq!(hosted, vec![d]);
        assert_eq!(e.append(LogId(999), b"x".to_vec()).unwrap_err().code, ErrorCode::UnknownLog);
    }

    #[test]
    fn sfork_past_and_promote_errors() {
        let e = engine();
        let p = e.create_root().unwrap();
        for i in 0..3u8 {
            e.append(p, vec![i]).unwrap();
        }
        let s = e.sfork(p, Some(Position(1)), false).unwrap();
        assert_eq!(e.get_tail(s).unwrap(), Assigned::At(Position(2)));
        assert_eq!(e.promote(s).unwrap_err().code, ErrorCode::NotPromotable);
        let s_read = e.read(s, Position(0), Position(2)).unwrap();
        assert_eq!(s_read, vec![vec![0], vec![1]]);
    }
}
