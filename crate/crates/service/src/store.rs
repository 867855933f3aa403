//! Append-only annotation log with last-write-wins materialization.
//!
//! Every accepted post appends one line `{"id": n, ...record}`. Replaying
//! the file in order rebuilds the current view, so a restart reproduces
//! exactly what was served before it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use distsum_core::corpus::Day;
use distsum_core::metrics::{AnnotationQuery, AnnotationRecord, AnnotationRound};
use serde::{Deserialize, Serialize};

type Identity = (String, String, Day, AnnotationQuery, String, AnnotationRound);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub id: u64,
    #[serde(flatten)]
    pub record: AnnotationRecord,
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    by_identity: HashMap<Identity, u64>,
    current: BTreeMap<u64, AnnotationRecord>,
    next_id: u64,
}

impl AnnotationStore {
    /// Store kept only in memory.
    pub fn in_memory() -> Self {
        AnnotationStore {
            path: None,
            writer: None,
            by_identity: HashMap::new(),
            current: BTreeMap::new(),
            next_id: 1,
        }
    }

    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut store = Self::in_memory();
        if path.exists() {
            let r = BufReader::new(File::open(path)?);
            for (i, line) in r.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: StoredAnnotation = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), i + 1),
                    )
                })?;
                store.apply(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.path = Some(path.to_path_buf());
        store.writer = Some(BufWriter::new(file));
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn apply(&mut self, entry: StoredAnnotation) {
        self.by_identity.insert(entry.record.identity(), entry.id);
        self.next_id = self.next_id.max(entry.id + 1);
        self.current.insert(entry.id, entry.record);
    }

    /// Appends `record`, reusing the id of an earlier record with the same
    /// identity. Returns the id.
    pub fn upsert(&mut self, record: AnnotationRecord) -> std::io::Result<u64> {
        let id = self.by_identity.get(&record.identity()).copied().unwrap_or(self.next_id);
        let entry = StoredAnnotation { id, record };
        if let Some(w) = self.writer.as_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        self.apply(entry);
        Ok(id)
    }

    /// Current records in id order, optionally restricted to one round.
    pub fn list(&self, round: Option<AnnotationRound>) -> Vec<StoredAnnotation> {
        self.current
            .iter()
            .filter(|(_, r)| round.is_none_or(|x| r.round == x))
            .map(|(&id, r)| StoredAnnotation { id, record: r.clone() })
            .collect()
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.current.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}
