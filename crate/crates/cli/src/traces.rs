//! Bounded on-disk trace store. Each trace is one JSON file named
//! `<seq>-<id>.json`; once `capacity` is exceeded the oldest file goes.

use finsql_core::sqlgen::{PipelineOutcome, Status};
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub trace_id: String,
    pub status: Status,
    pub elapsed_ms: u64,
    pub outcome: PipelineOutcome,
}

pub enum Lookup {
    Found(String),
    Pending,
    Missing,
}

struct Inner {
    /// (sequence number, trace id), oldest first.
    order: VecDeque<(u64, String)>,
    pending: HashSet<String>,
    next_seq: u64,
}

pub struct TraceStore {
    dir: PathBuf,
    capacity: usize,
    inner: Mutex<Inner>,
}

fn file_name(seq: u64, id: &str) -> String {
    format!("{seq:012}-{id}.json")
}

fn parse_name(name: &str) -> Option<(u64, String)> {
    let stem = name.strip_suffix(".json")?;
    let (seq, id) = stem.split_once('-')?;
    Some((seq.parse().ok()?, id.to_string()))
}

/// Trace ids are generated UUIDs; anything else cannot name a file here.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl TraceStore {
    /// Opens `dir`, creating it if needed, and drops anything beyond
    /// `capacity` left by an earlier run.
    pub fn open(dir: impl AsRef<Path>, capacity: usize) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut order: Vec<(u64, String)> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| parse_name(&e.file_name().to_string_lossy()))
            .collect();
        order.sort();
        let next_seq = order.last().map_or(0, |(s, _)| s + 1);
        let store = Self {
            dir,
            capacity: capacity.max(1),
            inner: Mutex::new(Inner {
                order: order.into(),
                pending: HashSet::new(),
                next_seq,
            }),
        };
        {
            let mut inner = store.inner.lock().unwrap();
            store.evict(&mut inner)?;
        }
        Ok(store)
    }

    fn evict(&self, inner: &mut Inner) -> io::Result<()> {
        while inner.order.len() > self.capacity {
            let (seq, id) = inner.order.pop_front().unwrap();
            match std::fs::remove_file(self.dir.join(file_name(seq, &id))) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn mark_pending(&self, id: &str) {
        self.inner.lock().unwrap().pending.insert(id.to_string());
    }

    pub fn insert(&self, doc: &TraceDocument) -> io::Result<()> {
        let json = serde_json::to_string(doc).map_err(io::Error::other)?;
        let mut inner = self.inner.lock().unwrap();
        inner.pending.remove(&doc.trace_id);
        let seq = inner.next_seq;
        inner.next_seq += 1;
        let path = self.dir.join(file_name(seq, &doc.trace_id));
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &path)?;
        inner.order.push_back((seq, doc.trace_id.clone()));
        self.evict(&mut inner)
    }

    pub fn get(&self, id: &str) -> io::Result<Lookup> {
        if !valid_id(id) {
            return Ok(Lookup::Missing);
        }
        let inner = self.inner.lock().unwrap();
        if inner.pending.contains(id) {
            return Ok(Lookup::Pending);
        }
        let Some((seq, _)) = inner.order.iter().rev().find(|(_, i)| i == id) else {
            return Ok(Lookup::Missing);
        };
        let path = self.dir.join(file_name(*seq, id));
        drop(inner);
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Lookup::Found(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Lookup::Missing),
            Err(e) => Err(e),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use finsql_core::sqlgen::PipelineTrace;

    fn doc(id: &str) -> TraceDocument {
        TraceDocument {
            trace_id: id.into(),
            status: Status::Failed,
            elapsed_ms: 1,
            outcome: PipelineOutcome {
                status: Status::Failed,
                final_table: None,
                trace: PipelineTrace::new("q", 3),
            },
        }
    }

    #[test]
    fn oldest_traces_are_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::open(dir.path(), 3).unwrap();
        for i in 0..5 {
            store.insert(&doc(&format!("t{i}"))).unwrap();
        }
        assert_eq!(store.len(), 3);
        assert!(matches!(store.get("t0").unwrap(), Lookup::Missing));
        assert!(matches!(store.get("t4").unwrap(), Lookup::Found(_)));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);

        // A reopened store keeps what is on disk, within the new capacity.
        let reopened = TraceStore::open(dir.path(), 2).unwrap();
        assert_eq!(reopened.len(), 2);
        assert!(matches!(reopened.get("t2").unwrap(), Lookup::Missing));
        reopened.insert(&doc("t5")).unwrap();
        assert!(matches!(reopened.get("t5").unwrap(), Lookup::Found(_)));
        assert!(matches!(reopened.get("t3").unwrap(), Lookup::Missing));
    }

    #[test]
    fn pending_and_bad_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::open(dir.path(), 10).unwrap();
        store.mark_pending("p");
        assert!(matches!(store.get("p").unwrap(), Lookup::Pending));
        store.insert(&doc("p")).unwrap();
        assert!(matches!(store.get("p").unwrap(), Lookup::Found(_)));
        assert!(matches!(store.get("../etc/passwd").unwrap(), Lookup::Missing));
    }
}
