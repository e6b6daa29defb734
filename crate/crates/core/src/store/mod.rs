//! Data plane: object stores, the object file format, a broker-local cache,
//! and the batching broker.

mod broker;
mod cache;
mod fs;
mod object;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

pub use broker::{Broker, BrokerConfig, BrokerId, RequestKind, RequestRecord};
pub use cache::{CachedStore, ObjectCache};
pub use fs::FsStore;
pub use object::{parse_object, ObjectBuilder, OBJECT_HEADER_LEN, OBJECT_MAGIC};

use crate::error::{EngineError, Result};
use crate::types::ObjectId;

pub trait ObjectStore: Send + Sync {
    /// Store `bytes` under a fresh id. Durable on return.
    fn put_object(&self, bytes: &[u8]) -> Result<ObjectId>;

    fn get_object(&self, id: ObjectId) -> Result<Arc<Vec<u8>>>;

    fn get_range(&self, id: ObjectId, offset: u64, length: u64) -> Result<Vec<u8>> {
        let obj = self.get_object(id)?;
        slice_range(&obj, id, offset, length).map(<[u8]>::to_vec)
    }

    /// Number of reads that reached the backend.
    fn backend_reads(&self) -> u64;
}

pub(crate) fn slice_range(obj: &[u8], id: ObjectId, offset: u64, length: u64) -> Result<&[u8]> {
    let end = offset
        .checked_add(length)
        .filter(|e| *e <= obj.len() as u64)
        .ok_or_else(|| EngineError::protocol(format!("range {offset}+{length} outside object {id} of {} bytes", obj.len())))?;
    Ok(&obj[offset as usize..end as usize])
}

#[derive(Default)]
pub struct MemStore {
    objects: RwLock<HashMap<ObjectId, Arc<Vec<u8>>>>,
    reads: AtomicU64,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ObjectStore for MemStore {
    fn put_object(&self, bytes: &[u8]) -> Result<ObjectId> {
        if bytes.is_empty() {
            return Err(EngineError::protocol("empty object"));
        }
        let mut objects = self.objects.write().expect("store lock");
        loop {
            let id = ObjectId::random();
            if let std::collections::hash_map::Entry::Vacant(v) = objects.entry(id) {
                v.insert(Arc::new(bytes.to_vec()));
                return Ok(id);
            }
        }
    }

    fn get_object(&self, id: ObjectId) -> Result<Arc<Vec<u8>>> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.objects.read().expect("store lock").get(&id).cloned().ok_or_else(|| EngineError::storage(format!("object {id} not found")))
    }

    fn get_range(&self, id: ObjectId, offset: u64, length: u64) -> Result<Vec<u8>> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let objects = self.objects.read().expect("store lock");
        let obj = objects.get(&id).ok_or_else(|| EngineError::storage(format!("object {id} not found")))?;
        slice_range(obj, id, offset, length).map(<[u8]>::to_vec)
    }

    fn backend_reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ErrorCode;

    #[test]
    fn put_get_round_trip_and_fresh_ids() {
        let s = MemStore::new();
        let a = s.put_object(b"hello").unwrap();
        let b = s.put_object(b"hello").unwrap();
        assert_ne!(a, b);
        assert_eq!(s.get_range(a, 0, 5).unwrap(), b"hello");
        assert_eq!(s.get_range(a, 1, 3).unwrap(), b"ell");
        assert_eq!(s.get_range(a, 3, 3).unwrap_err().code, ErrorCode::ProtocolError);
        assert_eq!(s.put_object(b"").unwrap_err().code, ErrorCode::ProtocolError);
    }
}
