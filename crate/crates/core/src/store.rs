//! File-backed hierarchical document store.
//!
//! Paths alternate collection and document names, the same way the hosted
//! database the app was first built on does: `Users/{uid}/Mood Records/{id}`.
//! On disk every collection is a directory and every document a file holding
//! a canonical JSON object. Names are percent-encoded so that spaces, colons
//! and dots in timestamp keys never clash with the file layout:
//!
//! ```text
//! <root>/Users/alice.json                        document  Users/alice
//! <root>/Users/alice/Mood%20Records/             collection Users/alice/Mood Records
//! <root>/Users/alice/Mood%20Records/2024-...json document
//! ```
//!
//! Writes go to a unique temp file which is synced and atomically renamed
//! over the target, so an acknowledged write survives a crash.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

const DOC_EXT: &str = ".json";

// Everything except ASCII alphanumerics, '-' and '_'.
const NAME_ENCODE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_');

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid path {path:?}: {reason}")]
    InvalidPath { path: String, reason: &'static str },
    #[error("document not found: {0}")]
    NotFound(DocumentPath),
    #[error("corrupt document {path}: {source}")]
    Corrupt {
        path: DocumentPath,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Slash-free segment list alternating collection/document names.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocumentPath {
    segments: Vec<String>,
}

impl DocumentPath {
    pub fn new<I, S>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        let display = segments.join("/");
        if segments.is_empty() {
            return Err(StoreError::InvalidPath {
                path: display,
                reason: "empty path",
            });
        }
        for seg in &segments {
            if seg.is_empty() {
                return Err(StoreError::InvalidPath {
                    path: display,
                    reason: "empty segment",
                });
            }
            if seg.contains('/') || seg.contains('\\') {
                return Err(StoreError::InvalidPath {
                    path: display,
                    reason: "segment contains a path separator",
                });
            }
        }
        Ok(Self { segments })
    }

    /// Parses a `/`-separated path.
    pub fn parse(path: &str) -> Result<Self> {
        Self::new(path.split('/'))
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn is_document(&self) -> bool {
        self.segments.len().is_multiple_of(2)
    }

    pub fn is_collection(&self) -> bool {
        !self.is_document()
    }

    /// Last segment: the document or collection name.
    pub fn name(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or_default()
    }

    pub fn child(&self, name: impl Into<String>) -> Result<Self> {
        let mut segments = self.segments.clone();
        segments.push(name.into());
        Self::new(segments)
    }
}

impl fmt::Display for DocumentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("/"))
    }
}

/// Field value. Documents only ever hold strings, counters and flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Integer(i64),
    Text(String),
}

impl Value {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Value::Integer(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Integer(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// A flat field map. Keys are kept sorted so serialization is canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Document {
    fields: BTreeMap<String, Value>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.fields.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_text)
    }

    pub fn integer(&self, key: &str) -> Option<i64> {
        self.get(key).and_then(Value::as_integer)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.fields.contains_key(key)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Canonical on-disk form: compact JSON, keys in ascending order.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(&self.fields).expect("scalar maps always serialize")
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    fn merge(&mut self, partial: Document) {
        self.fields.extend(partial.fields);
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for Document {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        let mut doc = Document::new();
        for (k, v) in iter {
            doc.set(k, v);
        }
        doc
    }
}

pub fn encode_name(name: &str) -> String {
    utf8_percent_encode(name, NAME_ENCODE).to_string()
}

pub fn decode_name(encoded: &str) -> Option<String> {
    percent_decode_str(encoded)
        .decode_utf8()
        .ok()
        .map(|s| s.into_owned())
}

/// Thread-safe handle on a store rooted at a directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<DocumentPath, Arc<Mutex<()>>>>,
    tmp_counter: AtomicU64,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates or replaces the document at `path`.
    pub fn put_document(&self, path: &DocumentPath, doc: &Document) -> Result<()> {
        require_document(path)?;
        let lock = self.lock_for(path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.write_file(path, doc)
    }

    /// Merges `partial` into an existing document.
    pub fn update_fields(&self, path: &DocumentPath, partial: Document) -> Result<()> {
        require_document(path)?;
        let lock = self.lock_for(path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut doc = self
            .read_file(path)?
            .ok_or_else(|| StoreError::NotFound(path.clone()))?;
        if partial.is_empty() {
            return Ok(());
        }
        doc.merge(partial);
        self.write_file(path, &doc)
    }

    pub fn get_document(&self, path: &DocumentPath) -> Result<Document> {
        require_document(path)?;
        self.read_file(path)?
            .ok_or_else(|| StoreError::NotFound(path.clone()))
    }

    /// Like [`Store::get_document`] but maps a missing document to `None`.
    pub fn try_get_document(&self, path: &DocumentPath) -> Result<Option<Document>> {
        require_document(path)?;
        self.read_file(path)
    }

    /// Removes a document if present. Sub-collections are left alone.
    pub fn delete_document(&self, path: &DocumentPath) -> Result<bool> {
        require_document(path)?;
        let lock = self.lock_for(path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let file = self.document_file(path);
        match fs::remove_file(&file) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(source) => Err(StoreError::Io { path: file, source }),
        }
    }

    /// Documents directly inside a collection, sorted by name. Nested
    /// collections are not descended into.
    pub fn list_collection(&self, path: &DocumentPath) -> Result<Vec<(String, Document)>> {
        if !path.is_collection() {
            return Err(StoreError::InvalidPath {
                path: path.to_string(),
                reason: "expected a collection path (odd number of segments)",
            });
        }
        let mut names = Vec::new();
        let dir = self.collection_dir(path);
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path: dir, source }),
        };
        for entry in entries {
            let entry = entry.map_err(|source| StoreError::Io {
                path: dir.clone(),
                source,
            })?;
            let file_name = entry.file_name();
            let Some(file_name) = file_name.to_str() else {
                continue;
            };
            let Some(stem) = file_name.strip_suffix(DOC_EXT) else {
                continue;
            };
            if stem.starts_with('.') {
                continue;
            }
            if let Some(name) = decode_name(stem) {
                names.push(name);
            }
        }
        names.sort();

        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let doc_path = path.child(name.clone())?;
            // Deleted between the directory scan and the read.
            if let Some(doc) = self.read_file(&doc_path)? {
                out.push((name, doc));
            }
        }
        Ok(out)
    }

    /// Location of the file backing a document path.
    pub fn document_file(&self, path: &DocumentPath) -> PathBuf {
        let segs = path.segments();
        let mut file = self.root.clone();
        for seg in &segs[..segs.len() - 1] {
            file.push(encode_name(seg));
        }
        file.push(format!("{}{}", encode_name(path.name()), DOC_EXT));
        file
    }

    fn collection_dir(&self, path: &DocumentPath) -> PathBuf {
        let mut dir = self.root.clone();
        for seg in path.segments() {
            dir.push(encode_name(seg));
        }
        dir
    }

    fn lock_for(&self, path: &DocumentPath) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(path.clone()).or_default().clone()
    }

    fn read_file(&self, path: &DocumentPath) -> Result<Option<Document>> {
        let file = self.document_file(path);
        let bytes = match fs::read(&file) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path: file, source }),
        };
        Document::from_json(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Corrupt {
                path: path.clone(),
                source,
            })
    }

    fn write_file(&self, path: &DocumentPath, doc: &Document) -> Result<()> {
        let file = self.document_file(path);
        let dir = file.parent().expect("document files live under the root");
        let io_err = |source| StoreError::Io {
            path: file.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;

        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            encode_name(path.name()),
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let written = (|| -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&doc.to_canonical_json())?;
            f.sync_all()?;
            fs::rename(&tmp, &file)?;
            // Persist the rename itself.
            fs::File::open(dir)?.sync_all()
        })();
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            return Err(io_err(e));
        }
        Ok(())
    }
}

fn require_document(path: &DocumentPath) -> Result<()> {
    if path.is_document() {
        Ok(())
    } else {
        Err(StoreError::InvalidPath {
            path: path.to_string(),
            reason: "expected a document path (even number of segments)",
        })
    }
}
