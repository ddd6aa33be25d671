//! Persistence behind the service: per-session journals and snapshots,
//! content-addressed document blobs and share records.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use simweave::pipeline::{parse_journal, JournalEvent, Session};
use simweave::prompts::sha256_hex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} already exists")]
    Exists(String),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record {path}: {detail}")]
    Corrupt { path: String, detail: String },
}

/// A simulation frozen at share time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShareRecord {
    pub simulation_id: String,
    pub document: String,
    pub created_at: String,
    pub source_session_id: String,
}

pub trait Store: Send + Sync {
    fn load(&self, id: &str) -> Result<Option<Session>, StoreError>;
    /// Persists `s`; `appended` are the journal events added since the
    /// last save.
    fn save(&self, s: &Session, appended: &[JournalEvent]) -> Result<(), StoreError>;
    /// Fails with [`StoreError::Exists`] if the id is taken.
    fn put_share(&self, rec: &ShareRecord) -> Result<(), StoreError>;
    fn get_share(&self, id: &str) -> Result<Option<ShareRecord>, StoreError>;
}

#[derive(Default)]
pub struct MemoryStore {
    sessions: Mutex<HashMap<String, Session>>,
    shares: Mutex<HashMap<String, ShareRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn load(&self, id: &str) -> Result<Option<Session>, StoreError> {
        Ok(self.sessions.lock().unwrap().get(id).cloned())
    }

    fn save(&self, s: &Session, _appended: &[JournalEvent]) -> Result<(), StoreError> {
        self.sessions
            .lock()
            .unwrap()
            .insert(s.id.clone(), s.clone());
        Ok(())
    }

    fn put_share(&self, rec: &ShareRecord) -> Result<(), StoreError> {
        let mut shares = self.shares.lock().unwrap();
        if shares.contains_key(&rec.simulation_id) {
            return Err(StoreError::Exists(rec.simulation_id.clone()));
        }
        shares.insert(rec.simulation_id.clone(), rec.clone());
        Ok(())
    }

    fn get_share(&self, id: &str) -> Result<Option<ShareRecord>, StoreError> {
        Ok(self.shares.lock().unwrap().get(id).cloned())
    }
}

/// Directory layout:
///
/// ```text
/// sessions/{id}/journal.ndjson   append-only event log
/// sessions/{id}/session.json     latest state, journal omitted
/// blobs/{sha256}                 shared documents
/// shares/{simulationId}.json     share metadata
/// ```
pub struct FileStore {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ShareMeta {
    simulation_id: String,
    document_sha256: String,
    created_at: String,
    source_session_id: String,
}

fn safe_name(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn corrupt(path: &Path, e: impl ToString) -> StoreError {
    StoreError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["sessions", "blobs", "shares"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(Self { root })
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    /// Writes via a temporary file so readers never see half a file.
    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn put_blob(&self, text: &str) -> Result<String, StoreError> {
        let sha = sha256_hex(text);
        let path = self.root.join("blobs").join(&sha);
        if !path.exists() {
            Self::write_atomic(&path, text.as_bytes())?;
        }
        Ok(sha)
    }
}

impl Store for FileStore {
    fn load(&self, id: &str) -> Result<Option<Session>, StoreError> {
        if !safe_name(id) {
            return Ok(None);
        }
        let dir = self.session_dir(id);
        let snapshot = dir.join("session.json");
        let text = match fs::read_to_string(&snapshot) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut s: Session = serde_json::from_str(&text).map_err(|e| corrupt(&snapshot, e))?;
        let log = dir.join("journal.ndjson");
        s.journal = parse_journal(&fs::read_to_string(&log)?).map_err(|e| corrupt(&log, e))?;
        Ok(Some(s))
    }

    fn save(&self, s: &Session, appended: &[JournalEvent]) -> Result<(), StoreError> {
        if !safe_name(&s.id) {
            return Err(corrupt(Path::new(&s.id), "unusable session id"));
        }
        let dir = self.session_dir(&s.id);
        fs::create_dir_all(&dir)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("journal.ndjson"))?;
        let lines: String = appended.iter().map(|e| e.to_ndjson_line() + "\n").collect();
        log.write_all(lines.as_bytes())?;
        log.sync_data()?;
        let mut snapshot = s.clone();
        snapshot.journal.clear();
        let json = serde_json::to_vec(&snapshot).expect("sessions serialize");
        Self::write_atomic(&dir.join("session.json"), &json)
    }

    fn put_share(&self, rec: &ShareRecord) -> Result<(), StoreError> {
        if !safe_name(&rec.simulation_id) {
            return Err(corrupt(
                Path::new(&rec.simulation_id),
                "unusable simulation id",
            ));
        }
        let meta = ShareMeta {
            simulation_id: rec.simulation_id.clone(),
            document_sha256: self.put_blob(&rec.document)?,
            created_at: rec.created_at.clone(),
            source_session_id: rec.source_session_id.clone(),
        };
        let path = self
            .root
            .join("shares")
            .join(format!("{}.json", rec.simulation_id));
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                return Err(StoreError::Exists(rec.simulation_id.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        f.write_all(&serde_json::to_vec(&meta).expect("metadata serializes"))?;
        f.sync_data()?;
        Ok(())
    }

    fn get_share(&self, id: &str) -> Result<Option<ShareRecord>, StoreError> {
        if !safe_name(id) {
            return Ok(None);
        }
        let path = self.root.join("shares").join(format!("{id}.json"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let meta: ShareMeta = serde_json::from_str(&text).map_err(|e| corrupt(&path, e))?;
        let blob = self.root.join("blobs").join(&meta.document_sha256);
        let document = fs::read_to_string(&blob)?;
        if sha256_hex(&document) != meta.document_sha256 {
            return Err(corrupt(&blob, "content does not match its digest"));
        }
        Ok(Some(ShareRecord {
            simulation_id: meta.simulation_id,
            document,
            created_at: meta.created_at,
            source_session_id: meta.source_session_id,
        }))
    }
}
