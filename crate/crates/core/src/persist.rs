//! Store persistence and the shared, transactional store handle.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Deserialize;

use crate::eks::{EksError, KnowledgeStore, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("cannot parse store at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("store schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("store content is inconsistent: {0}")]
    Invalid(#[from] EksError),
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PersistError {
    fn io(path: &Path, source: std::io::Error) -> PersistError {
        PersistError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn parse_error(e: serde_json::Error) -> PersistError {
    PersistError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Serializes a store to its pretty-printed JSON document.
pub fn store_to_string(store: &KnowledgeStore) -> String {
    serde_json::to_string_pretty(store).expect("store values are always serializable")
}

pub fn store_from_str(text: &str) -> Result<KnowledgeStore, PersistError> {
    #[derive(Deserialize)]
    struct Probe {
        schema_version: u32,
    }
    let probe: Probe = serde_json::from_str(text).map_err(parse_error)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(PersistError::Version {
            found: probe.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let store: KnowledgeStore = serde_json::from_str(text).map_err(parse_error)?;
    store.validate()?;
    Ok(store)
}

/// Writes the store atomically: the document goes to a temporary file next to
/// `path` which is then renamed over it.
pub fn save_store(store: &KnowledgeStore, path: &Path) -> Result<(), PersistError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "store".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));

    let result = (|| {
        let mut file = fs::File::create(&tmp).map_err(|e| PersistError::io(&tmp, e))?;
        file.write_all(store_to_string(store).as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .and_then(|_| file.sync_all())
            .map_err(|e| PersistError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| PersistError::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn load_store(path: &Path) -> Result<KnowledgeStore, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    store_from_str(&text)
}

/// Destination for committed store states.
pub trait StoreSink: Send + Sync {
    fn persist(&self, store: &KnowledgeStore) -> Result<(), PersistError>;
}

/// Saves every committed state to a file.
#[derive(Debug, Clone)]
pub struct FileSink {
    pub path: PathBuf,
}

impl StoreSink for FileSink {
    fn persist(&self, store: &KnowledgeStore) -> Result<(), PersistError> {
        save_store(store, &self.path)
    }
}

/// Keeps state in memory only.
#[derive(Debug, Clone, Copy, Default)]
pub struct MemorySink;

impl StoreSink for MemorySink {
    fn persist(&self, _store: &KnowledgeStore) -> Result<(), PersistError> {
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Eks(#[from] EksError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// A store shared between one writer at a time and any number of readers.
///
/// Readers take an immutable snapshot. A mutation runs on a private copy which
/// is persisted through the sink and only then published, so a failed
/// mutation or a failed write leaves the visible state untouched.
pub struct SharedStore {
    current: RwLock<Arc<KnowledgeStore>>,
    writer: Mutex<()>,
    sink: Box<dyn StoreSink>,
}

impl SharedStore {
    pub fn new(store: KnowledgeStore, sink: impl StoreSink + 'static) -> SharedStore {
        SharedStore {
            current: RwLock::new(Arc::new(store)),
            writer: Mutex::new(()),
            sink: Box::new(sink),
        }
    }

    pub fn snapshot(&self) -> Arc<KnowledgeStore> {
        self.current
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn mutate<T>(
        &self,
        f: impl FnOnce(&mut KnowledgeStore) -> Result<T, EksError>,
    ) -> Result<T, StoreError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        self.sink.persist(&next)?;
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(out)
    }
}
