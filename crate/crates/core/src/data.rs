//! Payload/application-data split: a size-limited payload check and an
//! addressable in-memory object store.
//!
//! Stores are per-worker with no cross-store lookup; intermediate data is
//! transient and lives for the run.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::bt::{Payload, DEFAULT_PAYLOAD_LIMIT};
use crate::ids::DataId;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store is closed")]
    StoreClosed,
    #[error("unknown data id `{0}`")]
    UnknownDataId(DataId),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreStats {
    pub objects: usize,
    pub bytes: u64,
}

/// In-memory object store handing out `<node>/<counter>` ids. Puts and
/// gets are individually atomic; a get never observes a partial put.
pub struct DataStore {
    node: String,
    next: AtomicU64,
    objects: RwLock<HashMap<DataId, Arc<Vec<u8>>>>,
    closed: AtomicBool,
    /// Optional directory mirror for CLI inspection.
    dir: Option<PathBuf>,
}

impl DataStore {
    pub fn new(node: impl Into<String>) -> Self {
        DataStore {
            node: node.into(),
            next: AtomicU64::new(0),
            objects: RwLock::new(HashMap::new()),
            closed: AtomicBool::new(false),
            dir: None,
        }
    }

    /// Store that additionally writes each object as a file named by id.
    pub fn with_directory(node: impl Into<String>, dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let mut store = DataStore::new(node);
        store.dir = Some(dir);
        Ok(store)
    }

    pub fn put(&self, bytes: &[u8]) -> Result<DataId, StoreError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(StoreError::StoreClosed);
        }
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        let id = DataId::new(format!("{}/{}", self.node, n));
        if let Some(dir) = &self.dir {
            std::fs::write(dir.join(format!("{}_{}", self.node, n)), bytes)?;
        }
        self.objects.write().unwrap().insert(id.clone(), Arc::new(bytes.to_vec()));
        Ok(id)
    }

    pub fn get(&self, id: &DataId) -> Result<Arc<Vec<u8>>, StoreError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(StoreError::StoreClosed);
        }
        self.objects
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownDataId(id.clone()))
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub fn stats(&self) -> StoreStats {
        let objects = self.objects.read().unwrap();
        StoreStats {
            objects: objects.len(),
            bytes: objects.values().map(|v| v.len() as u64).sum(),
        }
    }
}

/// Violation raised when a serialized payload exceeds the broker limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadViolation {
    pub size: usize,
    pub limit: usize,
}

impl std::fmt::Display for PayloadViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "payload of {} bytes exceeds the {}-byte limit", self.size, self.limit)
    }
}

/// Checks the serialized payload size against the broker limit. Only the
/// payload itself counts; data-store objects referenced by id do not.
pub fn check_payload(payload: &Payload, limit_bytes: usize) -> Result<(), PayloadViolation> {
    let size = payload.serialized_size();
    if size > limit_bytes {
        Err(PayloadViolation { size, limit: limit_bytes })
    } else {
        Ok(())
    }
}

/// [`check_payload`] with the default 1 MiB limit.
pub fn check_payload_default(payload: &Payload) -> Result<(), PayloadViolation> {
    check_payload(payload, DEFAULT_PAYLOAD_LIMIT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::PayloadValue;
    use rand::{Rng, SeedableRng};

    #[test]
    fn put_get_round_trip() {
        let store = DataStore::new("n1");
        let id = store.put(b"hello").unwrap();
        assert_eq!(store.get(&id).unwrap().as_slice(), b"hello");
    }

    #[test]
    fn zero_byte_object_is_fine() {
        let store = DataStore::new("n1");
        let id = store.put(b"").unwrap();
        assert!(store.get(&id).unwrap().is_empty());
    }

    #[test]
    fn identical_content_gets_distinct_ids() {
        let store = DataStore::new("n1");
        let a = store.put(b"same").unwrap();
        let b = store.put(b"same").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn large_random_blob_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let blob: Vec<u8> = (0..8 * 1024 * 1024).map(|_| rng.random()).collect();
        let store = DataStore::new("n1");
        let id = store.put(&blob).unwrap();
        assert_eq!(store.get(&id).unwrap().as_slice(), blob.as_slice());
        assert_eq!(store.stats().bytes, blob.len() as u64);
    }

    #[test]
    fn unknown_and_foreign_ids_are_rejected() {
        let a = DataStore::new("a");
        let b = DataStore::new("b");
        let id = a.put(b"x").unwrap();
        assert!(matches!(b.get(&id), Err(StoreError::UnknownDataId(_))));
        assert!(matches!(a.get(&DataId::new("a/999")), Err(StoreError::UnknownDataId(_))));
    }

    #[test]
    fn closed_store_rejects_operations() {
        let store = DataStore::new("n1");
        let id = store.put(b"x").unwrap();
        store.close();
        assert!(matches!(store.put(b"y"), Err(StoreError::StoreClosed)));
        assert!(matches!(store.get(&id), Err(StoreError::StoreClosed)));
    }

    #[test]
    fn ids_stay_unique_at_scale() {
        let store = DataStore::new("n1");
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100_000 {
            assert!(seen.insert(store.put(b"").unwrap()));
        }
    }

    #[test]
    fn concurrent_puts_and_gets() {
        let store = Arc::new(DataStore::new("n1"));
        let mut handles = Vec::new();
        for t in 0..4 {
            let store = Arc::clone(&store);
            handles.push(std::thread::spawn(move || {
                for i in 0..500 {
                    let payload = vec![t as u8; 64 + i % 32];
                    let id = store.put(&payload).unwrap();
                    assert_eq!(store.get(&id).unwrap().as_slice(), payload.as_slice());
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.stats().objects, 2000);
    }

    #[test]
    fn payload_check_counts_only_the_payload() {
        let mut p = Payload::new();
        assert!(check_payload(&p, DEFAULT_PAYLOAD_LIMIT).is_ok());

        p.set("inline", "x".repeat(2 * 1024 * 1024));
        assert!(check_payload(&p, DEFAULT_PAYLOAD_LIMIT).is_err());

        // A reference to a 2 MiB object costs only the id.
        let store = DataStore::new("n1");
        let id = store.put(&vec![0u8; 2 * 1024 * 1024]).unwrap();
        let mut p = Payload::new();
        p.set("blob", PayloadValue::Data(id));
        assert!(check_payload(&p, DEFAULT_PAYLOAD_LIMIT).is_ok());
    }

    #[test]
    fn directory_mode_writes_files() {
        let dir = std::env::temp_dir().join(format!("bf-store-{}", std::process::id()));
        let store = DataStore::with_directory("n1", dir.clone()).unwrap();
        store.put(b"on disk").unwrap();
        let entries = std::fs::read_dir(&dir).unwrap().count();
        assert_eq!(entries, 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
