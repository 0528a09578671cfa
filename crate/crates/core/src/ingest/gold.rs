use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, IngestError};
use crate::reliability::RatingTable;

/// A human coder's binary judgement (1 = negative campaigning present).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub doc_id: String,
    pub coder_id: String,
    pub label: u8,
}

/// Validated gold labels, sorted by (doc_id, coder_id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    labels: Vec<GoldLabel>,
}

impl GoldSet {
    pub fn new(mut labels: Vec<GoldLabel>) -> Result<Self, IngestError> {
        labels.sort_by(|a, b| (&a.doc_id, &a.coder_id).cmp(&(&b.doc_id, &b.coder_id)));
        for (i, l) in labels.iter().enumerate() {
            if l.label > 1 {
                return Err(IngestError::InvalidRow {
                    row: i + 1,
                    message: format!("label {} is not binary", l.label),
                });
            }
        }
        if let Some(w) = labels
            .windows(2)
            .find(|w| w[0].doc_id == w[1].doc_id && w[0].coder_id == w[1].coder_id)
        {
            return Err(IngestError::InvalidRow {
                row: 0,
                message: format!("duplicate label for ({}, {})", w[0].doc_id, w[0].coder_id),
            });
        }
        Ok(GoldSet { labels })
    }

    pub fn labels(&self) -> &[GoldLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn coders(&self) -> BTreeSet<&str> {
        self.labels.iter().map(|l| l.coder_id.as_str()).collect()
    }

    /// Doc ids absent from the corpus. These are kept; evaluation joins on the intersection.
    pub fn dangling(&self, corpus: &Corpus) -> Vec<String> {
        let ids: BTreeSet<&str> = self.labels.iter().map(|l| l.doc_id.as_str()).collect();
        ids.into_iter().filter(|id| corpus.get(id).is_none()).map(str::to_string).collect()
    }

    /// One reference label per document.
    ///
    /// With `coder` set, only that coder's labels are used. Otherwise a document
    /// coded by several coders takes the label of the lexicographically first coder.
    pub fn reference_labels(&self, coder: Option<&str>) -> BTreeMap<String, u8> {
        let mut out = BTreeMap::new();
        for l in &self.labels {
            if coder.is_some_and(|c| c != l.coder_id) {
                continue;
            }
            out.entry(l.doc_id.clone()).or_insert(l.label);
        }
        out
    }

    /// Items × coders table over every labelled document.
    pub fn rating_table(&self) -> RatingTable {
        let mut table = RatingTable::default();
        for l in &self.labels {
            table.set(&l.doc_id, &l.coder_id, l.label);
        }
        table
    }
}

#[derive(Debug, Deserialize)]
struct GoldRow {
    doc_id: String,
    coder_id: String,
    label: String,
}

pub fn ingest_gold(path: &Path) -> Result<GoldSet, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_gold_reader(file)
}

/// Parses `doc_id,coder_id,label` CSV. Any non-binary label is a hard error naming the row.
pub fn ingest_gold_reader<R: Read>(reader: R) -> Result<GoldSet, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["doc_id", "coder_id", "label"] {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(IngestError::MissingColumn(col.into()));
        }
    }
    let mut labels = Vec::new();
    let mut keys = BTreeSet::new();
    for (i, rec) in rdr.deserialize::<GoldRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| IngestError::InvalidRow { row, message: e.to_string() })?;
        let label = match rec.label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(IngestError::InvalidRow {
                    row,
                    message: format!(
                        "({}, {}, {other}): label must be 0 or 1",
                        rec.doc_id, rec.coder_id
                    ),
                })
            }
        };
        if !keys.insert((rec.doc_id.clone(), rec.coder_id.clone())) {
            return Err(IngestError::InvalidRow {
                row,
                message: format!("duplicate label for ({}, {})", rec.doc_id, rec.coder_id),
            });
        }
        labels.push(GoldLabel { doc_id: rec.doc_id, coder_id: rec.coder_id, label });
    }
    GoldSet::new(labels)
}
