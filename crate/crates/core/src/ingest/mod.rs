//! Corpus, gold-label, and party-metadata ingestion.
//!
//! Invalid records never abort a load. They are skipped and described in a
//! [`RejectionReport`] keyed by 1-based line number, so an 18M-line corpus can
//! be audited after the fact.

mod codes;
mod gold;
mod party;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codes::{normalize_country, normalize_language};
pub use gold::{ingest_gold, ingest_gold_reader, GoldLabel, GoldSet};
pub use party::{
    ingest_party_meta, ingest_party_meta_reader, write_party_meta_csv, PartyFamily, PartyMeta, PartyTable,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing header column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
}

/// One political message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(rename = "lang")]
    pub language: String,
    pub country: String,
    #[serde(rename = "author")]
    pub author_id: String,
    /// Empty for independents.
    #[serde(rename = "party", default)]
    pub party_id: String,
    pub created_at: String,
    #[serde(rename = "retweet", default)]
    pub is_retweet: bool,
}

impl Document {
    pub fn is_independent(&self) -> bool {
        self.party_id.is_empty()
    }

    pub fn detect_retweet(&self) -> bool {
        detect_retweet(&self.text, self.is_retweet)
    }
}

/// True iff the flag is set or the text starts with `RT @` after leading whitespace.
pub fn detect_retweet(text: &str, flag: bool) -> bool {
    flag || text.trim_start().starts_with("RT @")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    pub fn is_clean(&self) -> bool {
        self.rejections.is_empty()
    }
}

/// Immutable, id-sorted document collection with lookup indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: BTreeMap<String, usize>,
    by_party: BTreeMap<String, Vec<usize>>,
    by_country: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus, keeping the first occurrence of each id.
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Self {
        let mut seen = BTreeSet::new();
        let mut documents: Vec<Document> =
            docs.into_iter().filter(|d| seen.insert(d.id.clone())).collect();
        documents.sort_by(|a, b| a.id.cmp(&b.id));

        let mut by_id = BTreeMap::new();
        let mut by_party: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_country: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, d) in documents.iter().enumerate() {
            by_id.insert(d.id.clone(), i);
            by_party.entry(d.party_id.clone()).or_default().push(i);
            by_country.entry(d.country.clone()).or_default().push(i);
        }
        Corpus { documents, by_id, by_party, by_country }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    /// Documents of one party; the empty key holds independents.
    pub fn party(&self, party_id: &str) -> impl Iterator<Item = &Document> {
        self.by_party
            .get(party_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.documents[i])
    }

    pub fn country(&self, country: &str) -> impl Iterator<Item = &Document> {
        self.by_country
            .get(country)
            .into_iter()
            .flatten()
            .map(move |&i| &self.documents[i])
    }

    pub fn party_ids(&self) -> impl Iterator<Item = &str> {
        self.by_party.keys().map(String::as_str)
    }

    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.by_country.keys().map(String::as_str)
    }

    pub fn party_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_party
    }

    pub fn country_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_country
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    id: Option<String>,
    text: Option<String>,
    lang: Option<String>,
    country: Option<String>,
    author: Option<String>,
    #[serde(default)]
    party: Option<String>,
    created_at: Option<String>,
    #[serde(default)]
    retweet: Option<BoolLike>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BoolLike {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl BoolLike {
    fn parse(&self) -> Option<bool> {
        match self {
            BoolLike::Bool(b) => Some(*b),
            BoolLike::Int(0) => Some(false),
            BoolLike::Int(1) => Some(true),
            BoolLike::Int(_) => None,
            BoolLike::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "" | "0" | "false" => Some(false),
                "1" | "true" => Some(true),
                _ => None,
            },
        }
    }
}

fn validate(raw: RawDocument) -> Result<Document, (Option<String>, String)> {
    let id = match raw.id {
        Some(id) if !id.trim().is_empty() => id,
        _ => return Err((None, "missing field `id`".into())),
    };
    let fail = |msg: String| Err((Some(id.clone()), msg));
    let Some(text) = raw.text.filter(|t| !t.trim().is_empty()) else {
        return fail("missing or empty field `text`".into());
    };
    let Some(lang) = raw.lang else { return fail("missing field `lang`".into()) };
    let Some(language) = normalize_language(&lang) else {
        return fail(format!("invalid language code `{lang}`"));
    };
    let Some(ctry) = raw.country else { return fail("missing field `country`".into()) };
    let Some(country) = normalize_country(&ctry) else {
        return fail(format!("invalid country code `{ctry}`"));
    };
    let Some(author_id) = raw.author.filter(|a| !a.is_empty()) else {
        return fail("missing field `author`".into());
    };
    let Some(created_at) = raw.created_at else {
        return fail("missing field `created_at`".into());
    };
    if chrono::DateTime::parse_from_rfc3339(&created_at).is_err() {
        return fail(format!("`created_at` is not RFC 3339: `{created_at}`"));
    }
    let flag = match raw.retweet.as_ref().map(BoolLike::parse) {
        None => false,
        Some(Some(b)) => b,
        Some(None) => return fail("field `retweet` is not a boolean".into()),
    };
    let is_retweet = detect_retweet(&text, flag);
    Ok(Document {
        id,
        text,
        language,
        country,
        author_id,
        party_id: raw.party.unwrap_or_default().trim().to_string(),
        created_at,
        is_retweet,
    })
}

/// Loads a corpus file. Only an unreadable file is an error; bad records are reported.
pub fn ingest_documents(
    path: &Path,
    format: CorpusFormat,
) -> Result<(Corpus, RejectionReport), IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        CorpusFormat::Jsonl => ingest_jsonl(BufReader::new(file)),
        CorpusFormat::Csv => ingest_csv(file),
    }
}

fn collect(
    records: impl Iterator<Item = (usize, Result<RawDocument, String>)>,
) -> (Corpus, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut seen = BTreeSet::new();
    let mut docs = Vec::new();
    for (line, rec) in records {
        let outcome = rec.map_err(|e| (None, e)).and_then(validate);
        match outcome {
            Ok(doc) if !seen.insert(doc.id.clone()) => report.rejections.push(Rejection {
                line,
                id: Some(doc.id),
                reason: "duplicate id".into(),
            }),
            Ok(doc) => docs.push(doc),
            Err((id, reason)) => report.rejections.push(Rejection { line, id, reason }),
        }
    }
    report.accepted = docs.len();
    (Corpus::from_documents(docs), report)
}

pub fn ingest_jsonl<R: BufRead>(reader: R) -> Result<(Corpus, RejectionReport), IngestError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io { path: "<jsonl>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push((
            i + 1,
            serde_json::from_str::<RawDocument>(&line).map_err(|e| format!("malformed JSON: {e}")),
        ));
    }
    Ok(collect(records.into_iter()))
}

/// One JSON object per line, in corpus order; readable by [`ingest_jsonl`].
pub fn write_jsonl<W: Write>(mut out: W, corpus: &Corpus) -> std::io::Result<()> {
    for doc in corpus {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn ingest_csv<R: Read>(reader: R) -> Result<(Corpus, RejectionReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.deserialize::<RawDocument>() {
        match rec {
            Ok(raw) => {
                let line = records.len() + 2;
                records.push((line, Ok(raw)));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(records.len() + 2);
                records.push((line, Err(format!("malformed CSV record: {e}"))));
            }
        }
    }
    Ok(collect(records.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, lang: &str, country: &str) -> String {
        format!(
            r#"{{"id":"{id}","text":"hello {id}","lang":"{lang}","country":"{country}","author":"a1","party":"p1","created_at":"2019-05-01T12:00:00Z","retweet":false}}"#
        )
    }

    #[test]
    fn three_unique_lines() {
        let input = [line("d1", "en", "UK"), line("d2", "en", "UK"), line("d3", "de", "DE")].join("\n");
        let (corpus, report) = ingest_jsonl(input.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(report.is_clean());
        assert_eq!(report.accepted, 3);
    }

    #[test]
    fn duplicate_id_rejected_with_line() {
        let input = [line("d1", "en", "UK"), line("d1", "en", "UK")].join("\n");
        let (corpus, report) = ingest_jsonl(input.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].line, 2);
        assert_eq!(report.rejections[0].reason, "duplicate id");
    }

    #[test]
    fn invalid_codes_rejected() {
        let input = [line("d1", "xx", "UK"), line("d2", "en", "QQ"), line("d3", "EN", "gb")].join("\n");
        let (corpus, report) = ingest_jsonl(input.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let d3 = corpus.get("d3").unwrap();
        assert_eq!((d3.language.as_str(), d3.country.as_str()), ("en", "GB"));
        let lines: Vec<_> = report.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2]);
    }

    #[test]
    fn bad_timestamp_and_empty_text() {
        let bad_ts = line("d1", "en", "UK").replace("2019-05-01T12:00:00Z", "yesterday");
        let empty = line("d2", "en", "UK").replace("hello d2", "  ");
        let input = [bad_ts, empty, "{not json".to_string()].join("\n");
        let (corpus, report) = ingest_jsonl(input.as_bytes()).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(report.rejections.len(), 3);
        assert!(report.rejections[2].reason.starts_with("malformed JSON"));
    }

    #[test]
    fn csv_format() {
        let input = "id,text,lang,country,author,party,created_at,retweet\n\
                     b,Hi there,fr,FR,u1,,2020-01-01T00:00:00+01:00,true\n\
                     a,Salut,fr,FR,u2,ps,2020-01-01T00:00:00Z,0\n";
        let (corpus, report) = ingest_csv(input.as_bytes()).unwrap();
        assert!(report.is_clean(), "{report:?}");
        let ids: Vec<_> = corpus.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(corpus.get("b").unwrap().is_independent());
        assert!(corpus.get("b").unwrap().is_retweet);
    }

    #[test]
    fn unreadable_file() {
        let err = ingest_documents(Path::new("/nonexistent/corpus.jsonl"), CorpusFormat::Jsonl);
        assert!(matches!(err, Err(IngestError::Io { .. })));
    }

    #[test]
    fn retweet_detection() {
        assert!(detect_retweet("RT @user hello", false));
        assert!(detect_retweet("   RT @user hello", false));
        assert!(!detect_retweet("Great day", false));
        assert!(detect_retweet("Great day", true));
        assert!(!detect_retweet("rt @user lowercase", false));
    }

    #[test]
    fn indices_partition_documents() {
        let docs = (0..10).map(|i| Document {
            id: format!("d{i:02}"),
            text: "t".into(),
            language: "en".into(),
            country: if i % 2 == 0 { "UK".into() } else { "IE".into() },
            author_id: "a".into(),
            party_id: if i % 3 == 0 { String::new() } else { format!("p{}", i % 3) },
            created_at: "2020-01-01T00:00:00Z".into(),
            is_retweet: false,
        });
        let c = Corpus::from_documents(docs);
        let party_total: usize = c.party_index().values().map(Vec::len).sum();
        let country_total: usize = c.country_index().values().map(Vec::len).sum();
        assert_eq!(party_total, 10);
        assert_eq!(country_total, 10);
        assert_eq!(c.party("").count(), 4);
    }

    #[test]
    fn jsonl_round_trip() {
        let src = concat!(
            r#"{"id":"b","text":"RT @x: hi","lang":"en","country":"UK","author":"a1","party":"p","created_at":"2021-03-01T10:00:00Z"}"#, "\n",
            r#"{"id":"a","text":"Hallo","lang":"de","country":"DE","author":"a2","created_at":"2021-03-01T10:00:00+01:00","retweet":false}"#, "\n",
        );
        let (corpus, _) = ingest_jsonl(src.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &corpus).unwrap();
        let (again, report) = ingest_jsonl(buf.as_slice()).unwrap();
        assert!(report.rejections.is_empty());
        assert_eq!(again.documents(), corpus.documents());
        assert!(again.get("b").unwrap().is_retweet);
    }
}
