//! Which broker serves which log.
//!
//! Roots are spread round-robin over the root pool. Forks go to the fork
//! pool, keyed by their root ancestor so that siblings share a broker and no
//! fork ever lands on a root-pool broker. A dedicated fork gets a broker of
//! its own. Placement is soft state, rebuilt from the descriptors on start.

use std::collections::HashMap;
use std::sync::Arc;

use crate::store::{Broker, BrokerId};
use crate::types::LogId;

#[derive(Debug, Default)]
pub struct BrokerPool {
    brokers: Vec<Arc<Broker>>,
    root_pool: Vec<usize>,
    fork_pool: Vec<usize>,
    placement: HashMap<LogId, usize>,
    next_root: usize,
}

impl BrokerPool {
    /// `spawn` builds the broker for each id, roots first.
    pub fn new(roots: usize, forks: usize, mut spawn: impl FnMut(BrokerId) -> Broker) -> Self {
        let mut pool = BrokerPool::default();
        for i in 0..roots.max(1) + forks {
            pool.brokers.push(Arc::new(spawn(BrokerId(i as u32))));
            if i < roots.max(1) {
                pool.root_pool.push(i);
            } else {
                pool.fork_pool.push(i);
            }
        }
        pool
    }

    pub fn brokers(&self) -> &[Arc<Broker>] {
        &self.brokers
    }

    pub fn broker_of(&self, log: LogId) -> Option<&Arc<Broker>> {
        self.placement.get(&log).map(|i| &self.brokers[*i])
    }

    pub fn place_root(&mut self, log: LogId) -> BrokerId {
        let slot = self.root_pool[self.next_root % self.root_pool.len()];
        self.next_root += 1;
        self.placement.insert(log, slot);
        self.brokers[slot].id()
    }

    pub fn place_fork(&mut self, log: LogId, root: LogId, dedicated: bool, spawn: impl FnOnce(BrokerId) -> Broker) -> BrokerId {
        let slot = if dedicated {
            self.brokers.push(Arc::new(spawn(BrokerId(self.brokers.len() as u32))));
            self.brokers.len() - 1
        } else if !self.fork_pool.is_empty() {
            self.fork_pool[(root.0 % self.fork_pool.len() as u64) as usize]
        } else {
            // No fork pool: any root-pool broker other than the root's own.
            let root_slot = self.placement.get(&root).copied();
            self.root_pool.iter().copied().find(|s| Some(*s) != root_slot).unwrap_or(self.root_pool[0])
        };
        self.placement.insert(log, slot);
        self.brokers[slot].id()
    }
}
