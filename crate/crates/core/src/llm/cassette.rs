use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::provider::LlmError;
use super::request::LlmExchange;

/// Newline-delimited JSON, one [`LlmExchange`] per line, append-only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: Vec<LlmExchange>,
}

impl Cassette {
    pub fn new(entries: Vec<LlmExchange>) -> Self {
        Self { entries }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ex: LlmExchange = serde_json::from_str(line)
                .map_err(|e| LlmError::Cassette(format!("line {}: {e}", i + 1)))?;
            entries.push(ex);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[LlmExchange] {
        &self.entries
    }

    pub fn push(&mut self, ex: LlmExchange) {
        self.entries.push(ex);
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for ex in &self.entries {
            out.push_str(&serde_json::to_string(ex).expect("exchange serializes"));
            out.push('\n');
        }
        out
    }
}

/// Fingerprint lookup over a cassette. Repeated identical requests get the
/// recorded replies in order; past the last one, the last reply repeats.
pub(crate) struct ReplayIndex {
    cassette: Cassette,
    by_fp: HashMap<String, Vec<usize>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayIndex {
    pub(crate) fn new(cassette: Cassette) -> Self {
        let mut by_fp: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, ex) in cassette.entries.iter().enumerate() {
            by_fp.entry(ex.fingerprint.clone()).or_default().push(i);
        }
        Self {
            cassette,
            by_fp,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn lookup(&self, fingerprint: &str, tag: &str) -> Result<&LlmExchange, LlmError> {
        let Some(slots) = self.by_fp.get(fingerprint) else {
            let same_tag = self
                .cassette
                .entries
                .iter()
                .filter(|e| e.request.tag == tag)
                .count();
            let hint = if same_tag > 0 {
                format!(
                    "cassette holds {same_tag} exchange(s) tagged `{tag}` with different content"
                )
            } else {
                let mut tags: Vec<&str> = self
                    .cassette
                    .entries
                    .iter()
                    .map(|e| e.request.tag.as_str())
                    .collect();
                tags.sort();
                tags.dedup();
                format!(
                    "cassette has no `{tag}` exchanges; recorded tags: {}",
                    tags.join(", ")
                )
            };
            return Err(LlmError::ReplayMiss {
                fingerprint: fingerprint.to_string(),
                tag: tag.to_string(),
                hint,
            });
        };
        let mut cursors = self.cursors.lock().unwrap();
        let n = cursors.entry(fingerprint.to_string()).or_insert(0);
        let slot = slots[(*n).min(slots.len() - 1)];
        *n += 1;
        Ok(&self.cassette.entries[slot])
    }

    pub(crate) fn reset(&self) {
        self.cursors.lock().unwrap().clear();
    }
}

/// Appends exchanges to a cassette file; writes are serialized.
pub(crate) struct CassetteWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl CassetteWriter {
    pub(crate) fn open(path: &Path) -> Result<Self, LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| LlmError::Cassette(format!("{}: {e}", dir.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub(crate) fn append(&self, ex: &LlmExchange) -> Result<(), LlmError> {
        let mut line = serde_json::to_string(ex).map_err(|e| LlmError::Cassette(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", self.path.display())))
    }
}
