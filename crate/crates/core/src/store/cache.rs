use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use super::{slice_range, ObjectStore};
use crate::error::Result;
use crate::types::ObjectId;

/// Whole-object LRU bounded by total cached bytes.
#[derive(Debug, Default)]
pub struct ObjectCache {
    capacity: usize,
    used: usize,
    tick: u64,
    objects: HashMap<ObjectId, (u64, Arc<Vec<u8>>)>,
    by_age: BTreeMap<u64, ObjectId>,
    hits: u64,
    misses: u64,
}

impl ObjectCache {
    pub fn new(capacity: usize) -> Self {
        ObjectCache { capacity, ..Default::default() }
    }

    pub fn get(&mut self, id: ObjectId) -> Option<Arc<Vec<u8>>> {
        let Some((age, obj)) = self.objects.get_mut(&id) else {
            self.misses += 1;
            return None;
        };
        self.hits += 1;
        self.by_age.remove(age);
        self.tick += 1;
        *age = self.tick;
        self.by_age.insert(self.tick, id);
        Some(obj.clone())
    }

    pub fn insert(&mut self, id: ObjectId, obj: Arc<Vec<u8>>) {
        if obj.len() > self.capacity || self.objects.contains_key(&id) {
            return;
        }
        while self.used + obj.len() > self.capacity {
            let (_, victim) = self.by_age.pop_first().expect("over capacity implies entries");
            let (_, old) = self.objects.remove(&victim).expect("aged entry");
            self.used -= old.len();
        }
        self.tick += 1;
        self.used += obj.len();
        self.by_age.insert(self.tick, id);
        self.objects.insert(id, (self.tick, obj));
    }

    pub fn used_bytes(&self) -> usize {
        self.used
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}

/// A store fronted by an [`ObjectCache`]. With zero capacity every read goes
/// straight to the backend.
pub struct CachedStore {
    inner: Arc<dyn ObjectStore>,
    cache: Mutex<ObjectCache>,
    capacity: usize,
}

impl CachedStore {
    pub fn new(inner: Arc<dyn ObjectStore>, capacity: usize) -> Self {
        CachedStore { inner, cache: Mutex::new(ObjectCache::new(capacity)), capacity }
    }

    pub fn cache_stats(&self) -> (u64, u64, usize) {
        let c = self.cache.lock().expect("cache lock");
        (c.hits(), c.misses(), c.used_bytes())
    }
}

impl ObjectStore for CachedStore {
    fn put_object(&self, bytes: &[u8]) -> Result<ObjectId> {
        self.inner.put_object(bytes)
    }

    fn get_object(&self, id: ObjectId) -> Result<Arc<Vec<u8>>> {
        if let Some(obj) = self.cache.lock().expect("cache lock").get(id) {
            return Ok(obj);
        }
        let obj = self.inner.get_object(id)?;
        self.cache.lock().expect("cache lock").insert(id, obj.clone());
        Ok(obj)
    }

    fn get_range(&self, id: ObjectId, offset: u64, length: u64) -> Result<Vec<u8>> {
        if self.capacity == 0 {
            return self.inner.get_range(id, offset, length);
        }
        let obj = self.get_object(id)?;
        slice_range(&obj, id, offset, length).map(<[u8]>::to_vec)
    }

    fn backend_reads(&self) -> u64 {
        self.inner.backend_reads()
    }
}
