//! Corpus ingestion, text normalization, deduplication and train/test splitting.
//!
//! Documents flow through `load_corpus -> dedupe_and_filter -> preprocess -> split`.
//! Every step is a pure function of its inputs; splitting is deterministic for a
//! given seed.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed jsonl at line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("lexicon entry `{0}` is not lowercase")]
    NotLowercase(String),
    #[error("lemma lexicon contains a cycle through `{0}`")]
    LemmaCycle(String),
    #[error("malformed lemma lexicon at line {0}: expected `surface<TAB>lemma`")]
    BadLemmaLine(usize),
    #[error("train_fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
}

/// Split assignment of a document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        };
        f.write_str(s)
    }
}

/// One proposal text with its source process, the category its author picked
/// (if any), and the preprocessing artifacts derived from it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub process: String,
    pub declared_category: Option<String>,
    pub clean_text: String,
    pub token_list: Vec<String>,
    pub split: Split,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            raw_text: raw_text.into(),
            process: String::new(),
            declared_category: None,
            clean_text: String::new(),
            token_list: Vec::new(),
            split: Split::Unassigned,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.declared_category = Some(category.into());
        self
    }
}

/// Ordered document collection plus the parameters of its split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Self { documents, split_seed: 0, train_fraction: 0.8 }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn train_documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.split == Split::Train)
    }

    pub fn test_documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.split == Split::Test)
    }
}

/// Stopword set and lemma lookup used by [`preprocess`].
///
/// The lemma lexicon is canonicalized on construction: transitive chains
/// (`a -> b`, `b -> c`) are resolved to their final form and cycles are
/// rejected, so a single lookup pass is a fixed point.
#[derive(Clone, Debug, Default)]
pub struct PreprocessConfig {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
    pub min_chars_after_clean: usize,
}

impl PreprocessConfig {
    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        lemmas: impl IntoIterator<Item = (String, String)>,
        min_chars_after_clean: usize,
    ) -> Result<Self, CorpusError> {
        let stopwords: HashSet<String> = stopwords.into_iter().collect();
        for word in &stopwords {
            ensure_lowercase(word)?;
        }
        let raw: HashMap<String, String> = lemmas.into_iter().collect();
        for (surface, lemma) in &raw {
            ensure_lowercase(surface)?;
            ensure_lowercase(lemma)?;
        }
        let lemmas = resolve_lemma_chains(&raw)?;
        Ok(Self { stopwords, lemmas, min_chars_after_clean })
    }

    /// Reads the one-word-per-line stopword file and the `surface<TAB>lemma`
    /// lexicon. Either path may be absent.
    pub fn load(
        stopword_path: Option<&Path>,
        lemma_path: Option<&Path>,
        min_chars_after_clean: usize,
    ) -> Result<Self, CorpusError> {
        let mut stopwords = Vec::new();
        if let Some(path) = stopword_path {
            let reader = open(path)?;
            for line in reader.lines() {
                let line = line.map_err(|source| io_err(path, source))?;
                let word = line.trim();
                if !word.is_empty() {
                    stopwords.push(word.to_string());
                }
            }
        }
        let mut lemmas = Vec::new();
        if let Some(path) = lemma_path {
            let reader = open(path)?;
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|source| io_err(path, source))?;
                if line.trim().is_empty() {
                    continue;
                }
                let (surface, lemma) =
                    line.split_once('\t').ok_or(CorpusError::BadLemmaLine(i + 1))?;
                lemmas.push((surface.trim().to_string(), lemma.trim().to_string()));
            }
        }
        Self::new(stopwords, lemmas, min_chars_after_clean)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map_or(token, String::as_str)
    }
}

fn ensure_lowercase(word: &str) -> Result<(), CorpusError> {
    if word.chars().any(char::is_uppercase) {
        return Err(CorpusError::NotLowercase(word.to_string()));
    }
    Ok(())
}

fn resolve_lemma_chains(
    raw: &HashMap<String, String>,
) -> Result<HashMap<String, String>, CorpusError> {
    let mut resolved = HashMap::with_capacity(raw.len());
    for surface in raw.keys() {
        let mut seen = HashSet::new();
        seen.insert(surface.as_str());
        let mut current = raw[surface].as_str();
        while let Some(next) = raw.get(current) {
            if next == current {
                break;
            }
            if !seen.insert(current) {
                return Err(CorpusError::LemmaCycle(surface.clone()));
            }
            current = next;
        }
        if current != surface {
            resolved.insert(surface.clone(), current.to_string());
        }
    }
    Ok(resolved)
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| io_err(path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// Input format accepted by [`load_corpus`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

#[derive(Deserialize)]
struct RawRow {
    id: String,
    text: String,
    #[serde(default)]
    process: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

/// Loads documents in file order. `id` and `text` are required, `process` and
/// `category` are optional; nothing is cleaned or dropped at this stage.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let rows = match format {
        CorpusFormat::Csv => load_csv_rows(path)?,
        CorpusFormat::Jsonl => load_jsonl_rows(path)?,
    };
    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.id.clone()) {
            return Err(CorpusError::DuplicateId(row.id));
        }
        let mut doc = Document::new(row.id, row.text);
        doc.process = row.process.unwrap_or_default();
        doc.declared_category = row.category.filter(|c| !c.trim().is_empty());
        documents.push(doc);
    }
    Ok(Corpus::new(documents))
}

fn load_csv_rows(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) }
        }
        _ => CorpusError::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or(CorpusError::MissingField("id"))?;
    let text_col = col("text").ok_or(CorpusError::MissingField("text"))?;
    let process_col = col("process");
    let category_col = col("category");

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(RawRow {
            id: record.get(id_col).unwrap_or_default().to_string(),
            text: record.get(text_col).unwrap_or_default().to_string(),
            process: process_col.and_then(|c| record.get(c)).map(str::to_string),
            category: category_col.and_then(|c| record.get(c)).map(str::to_string),
        });
    }
    Ok(rows)
}

fn load_jsonl_rows(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let reader = open(path)?;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| io_err(path, source))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(&line).map_err(|e| {
            if e.to_string().contains("missing field `id`") {
                CorpusError::MissingField("id")
            } else if e.to_string().contains("missing field `text`") {
                CorpusError::MissingField("text")
            } else {
                CorpusError::Jsonl { line: i + 1, message: e.to_string() }
            }
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Lowercases `raw`, strips every character that is not a letter, digit or
/// space, and collapses whitespace runs. The result never contains uppercase
/// letters, punctuation or double spaces.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_whitespace() {
            out.push(' ');
        } else if ch.is_alphabetic() || ch.is_numeric() {
            out.extend(ch.to_lowercase());
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cleans one text and derives its token list: stopwords are dropped, tokens
/// are lemma-mapped, and tokens whose lemma is itself a stopword are dropped
/// as well.
pub fn preprocess_text(raw: &str, config: &PreprocessConfig) -> (String, Vec<String>) {
    let clean = clean_text(raw);
    let tokens = clean
        .split(' ')
        .filter(|t| !t.is_empty() && !config.is_stopword(t))
        .map(|t| config.lemma(t))
        .filter(|t| !config.is_stopword(t))
        .map(str::to_string)
        .collect();
    (clean, tokens)
}

/// Applies [`preprocess_text`] to every document. Documents that end up with an
/// empty token list, or whose clean text is shorter than
/// `min_chars_after_clean` characters, are dropped.
pub fn preprocess(corpus: &Corpus, config: &PreprocessConfig) -> Corpus {
    let documents = corpus
        .documents
        .iter()
        .filter_map(|doc| {
            let (clean, tokens) = preprocess_text(&doc.raw_text, config);
            if tokens.is_empty() || clean.chars().count() < config.min_chars_after_clean {
                return None;
            }
            let mut doc = doc.clone();
            doc.clean_text = clean;
            doc.token_list = tokens;
            Some(doc)
        })
        .collect();
    Corpus { documents, ..*corpus }
}

/// Why a document was removed by [`dedupe_and_filter`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalReason {
    Duplicate,
    Empty,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::Duplicate => "duplicate",
            RemovalReason::Empty => "empty",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub reason: RemovalReason,
}

/// Removes empty documents and duplicate texts, keeping the first occurrence.
/// Duplicates are detected on the lowercased, whitespace-collapsed raw text, so
/// two documents differing only in case or spacing count as one.
pub fn dedupe_and_filter(corpus: &Corpus) -> (Corpus, Vec<Removal>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(corpus.len());
    let mut removed = Vec::new();
    for doc in &corpus.documents {
        let key = doc.raw_text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        if key.is_empty() {
            removed.push(Removal { id: doc.id.clone(), reason: RemovalReason::Empty });
        } else if seen.insert(key) {
            kept.push(doc.clone());
        } else {
            removed.push(Removal { id: doc.id.clone(), reason: RemovalReason::Duplicate });
        }
    }
    (Corpus { documents: kept, ..*corpus }, removed)
}

/// Writes the removal report as CSV `id,reason`.
pub fn write_removal_report(path: &Path, removals: &[Removal]) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
    writer.write_record(["id", "reason"])?;
    for removal in removals {
        writer.write_record([removal.id.as_str(), &removal.reason.to_string()])?;
    }
    writer.flush().map_err(|source| io_err(path, source))?;
    Ok(())
}

/// Reads a removal report written by [`write_removal_report`].
pub fn read_removal_report(path: &Path) -> Result<Vec<Removal>, CorpusError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
    let mut removals = Vec::new();
    for record in reader.records() {
        let record = record?;
        let reason = match record.get(1).unwrap_or_default() {
            "duplicate" => RemovalReason::Duplicate,
            _ => RemovalReason::Empty,
        };
        removals.push(Removal { id: record.get(0).unwrap_or_default().to_string(), reason });
    }
    Ok(removals)
}

/// Assigns every document to train or test, deterministically for a given seed.
///
/// When at least 90% of documents carry a declared category the split is
/// stratified on it: each stratum is shuffled and the first
/// `round(fraction * stratum size)` documents go to train. Otherwise one global
/// shuffle is used, which keeps the realized train count within one document of
/// `fraction * N`.
pub fn split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    let mut out = corpus.clone();
    out.split_seed = seed;
    out.train_fraction = train_fraction;
    let n = out.documents.len();
    if n == 0 {
        return Ok(out);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let with_category =
        out.documents.iter().filter(|d| d.declared_category.is_some()).count();
    let stratified = (with_category as f64) >= 0.9 * (n as f64);

    let mut strata: Vec<(String, Vec<usize>)> = Vec::new();
    if stratified {
        let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, doc) in out.documents.iter().enumerate() {
            let key = doc.declared_category.clone().unwrap_or_default();
            by_key.entry(key).or_default().push(i);
        }
        strata = by_key.into_iter().collect();
        strata.sort_by(|a, b| a.0.cmp(&b.0));
    } else {
        strata.push((String::new(), (0..n).collect()));
    }

    for (_, mut indices) in strata {
        indices.shuffle(&mut rng);
        let n_train = ((train_fraction * indices.len() as f64).round() as usize).min(indices.len());
        for (pos, &i) in indices.iter().enumerate() {
            out.documents[i].split = if pos < n_train { Split::Train } else { Split::Test };
        }
    }
    Ok(out)
}

/// Writes a corpus as `id,text,process,category` CSV. `text` holds the clean
/// text when present, the raw text otherwise, so a prepared corpus can be
/// reloaded without repeating preprocessing decisions.
pub fn write_corpus_csv(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
    writer.write_record(["id", "text", "process", "category"])?;
    for doc in &corpus.documents {
        let text = if doc.clean_text.is_empty() { &doc.raw_text } else { &doc.clean_text };
        writer.write_record([
            doc.id.as_str(),
            text.as_str(),
            doc.process.as_str(),
            doc.declared_category.as_deref().unwrap_or_default(),
        ])?;
    }
    writer.flush().map_err(|source| io_err(path, source))?;
    Ok(())
}

/// Writes the split assignment as CSV `id,split`.
pub fn write_split_csv(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
    writer.write_record(["id", "split"])?;
    for doc in &corpus.documents {
        writer.write_record([doc.id.as_str(), &doc.split.to_string()])?;
    }
    writer.flush().map_err(|source| io_err(path, source))?;
    Ok(())
}

/// Reads a split file written by [`write_split_csv`] into an id -> split map.
pub fn read_split_csv(path: &Path) -> Result<HashMap<String, Split>, CorpusError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: std::io::Error::other(e) })?;
    let mut map = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let split = match record.get(1).unwrap_or_default() {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => Split::Unassigned,
        };
        map.insert(record.get(0).unwrap_or_default().to_string(), split);
    }
    Ok(map)
}
