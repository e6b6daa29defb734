use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::ObjectStore;
use crate::error::{EngineError, Result};
use crate::types::ObjectId;

/// One file per object at `<root>/<hex[0..2]>/<hex[2..4]>/<hex>`.
pub struct FsStore {
    root: PathBuf,
    reads: AtomicU64,
}

impl FsStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(FsStore { root, reads: AtomicU64::new(0) })
    }

    pub fn path_of(&self, id: ObjectId) -> PathBuf {
        let hex = id.to_hex();
        self.root.join(&hex[0..2]).join(&hex[2..4]).join(hex)
    }

    fn not_found(id: ObjectId, e: std::io::Error) -> EngineError {
        EngineError::storage(format!("object {id}: {e}"))
    }
}

impl ObjectStore for FsStore {
    fn put_object(&self, bytes: &[u8]) -> Result<ObjectId> {
        if bytes.is_empty() {
            return Err(EngineError::protocol("empty object"));
        }
        loop {
            let id = ObjectId::random();
            let path = self.path_of(id);
            let dir = path.parent().expect("fan-out dir");
            fs::create_dir_all(dir)?;
            let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(f) => f,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            };
            f.write_all(bytes)?;
            f.sync_all()?;
            File::open(dir)?.sync_all()?;
            return Ok(id);
        }
    }

    fn get_object(&self, id: ObjectId) -> Result<Arc<Vec<u8>>> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        fs::read(self.path_of(id)).map(Arc::new).map_err(|e| Self::not_found(id, e))
    }

    fn get_range(&self, id: ObjectId, offset: u64, length: u64) -> Result<Vec<u8>> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let mut f = File::open(self.path_of(id)).map_err(|e| Self::not_found(id, e))?;
        let size = f.metadata()?.len();
        if offset.checked_add(length).is_none_or(|end| end > size) {
            return Err(EngineError::protocol(format!("range {offset}+{length} outside object {id} of {size} bytes")));
        }
        f.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0; length as usize];
        f.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn backend_reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}
