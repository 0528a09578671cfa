//! Append-only annotation cache.
//!
//! Each stored result is one JSON line written with a single `write_all` and
//! flushed. On open, a trailing line without its newline is the remnant of an
//! interrupted write: it is cut off before any new entry is appended.
//! [`AnnotationCache::compact`] rewrites the log through a temp file and an
//! atomic rename.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::AnnotationResult;
use crate::codebook::PromptHash;

type Key = (PromptHash, String);

#[derive(Debug, Default)]
pub struct AnnotationCache {
    entries: RwLock<HashMap<Key, AnnotationResult>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl AnnotationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a cache log. Later entries for a key win.
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let mut raw = Vec::new();
            File::open(path)?.read_to_end(&mut raw)?;
            let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            if complete < raw.len() {
                OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
            }
            for line in raw[..complete].split(|&b| b == b'\n') {
                if line.is_empty() {
                    continue;
                }
                if let Ok(r) = serde_json::from_slice::<AnnotationResult>(line) {
                    entries.insert((r.prompt_hash, r.doc_id.clone()), r);
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AnnotationCache {
            entries: RwLock::new(entries),
            log: Some(Mutex::new(log)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, prompt_hash: PromptHash, doc_id: &str) -> Option<AnnotationResult> {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries.get(&(prompt_hash, doc_id.to_string())).cloned()
    }

    /// Stores a result. The stored copy always has `from_cache = false`.
    pub fn put(&self, result: &AnnotationResult) -> io::Result<()> {
        let mut stored = result.clone();
        stored.from_cache = false;
        if let Some(log) = &self.log {
            let mut line = serde_json::to_vec(&stored).map_err(io::Error::other)?;
            line.push(b'\n');
            let mut f = log.lock().expect("cache log poisoned");
            f.write_all(&line)?;
            f.flush()?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((stored.prompt_hash, stored.doc_id.clone()), stored);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrites the log with one line per key, sorted by (doc_id, prompt_hash).
    pub fn compact(&self) -> io::Result<()> {
        let (Some(path), Some(log)) = (&self.path, &self.log) else {
            return Ok(());
        };
        let mut guard = log.lock().expect("cache log poisoned");
        let entries = self.entries.read().expect("cache lock poisoned");
        let mut rows: Vec<&AnnotationResult> = entries.values().collect();
        rows.sort_by(|a, b| (&a.doc_id, a.prompt_hash).cmp(&(&b.doc_id, b.prompt_hash)));

        let tmp = path.with_extension("compact.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for r in rows {
                serde_json::to_writer(&mut w, r).map_err(io::Error::other)?;
                w.write_all(b"\n")?;
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        *guard = OpenOptions::new().append(true).open(path)?;
        Ok(())
    }
}
