//! Topic term statistics: vectorization, class-based TF-IDF, top words,
//! and topic-count reduction.
//!
//! The weighting treats each topic as one concatenated document: term counts
//! are normalized by the topic's total and scaled by ln(1 + A/f_t), where A is
//! the mean term mass per topic and f_t the term's frequency over the whole
//! corpus, outlier documents included.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterAssignment;
use crate::embeddings;
use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("no documents to vectorize")]
    EmptyCorpus,
    #[error("vocabulary is empty after vectorization")]
    EmptyVocabulary,
    #[error("n-gram range ({0}, {1}) is invalid, need 1 <= lo <= hi <= 2")]
    BadNgramRange(usize, usize),
    #[error("{docs} documents but {labels} labels")]
    LengthMismatch { docs: usize, labels: usize },
    #[error("topic {0} has no terms")]
    EmptyTopic(i32),
    #[error("k_top must be at least 1")]
    BadKTop,
    #[error("target topic count {0} must be at least 2")]
    BadTarget(usize),
    #[error("seed multiplier {0} must be positive and finite")]
    BadMultiplier(f64),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed topic table {path}: {message}")]
    Format { path: String, message: String },
}

/// Target topic count after reduction. `Auto` keeps whatever the clustering
/// produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NrTopics {
    Auto,
    Fixed(usize),
}

impl fmt::Display for NrTopics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NrTopics::Auto => f.write_str("auto"),
            NrTopics::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for NrTopics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(NrTopics::Auto)
        } else {
            s.parse::<usize>().map(NrTopics::Fixed).map_err(|_| {
                format!("`{s}` is neither `auto` nor a topic count")
            })
        }
    }
}

impl Serialize for NrTopics {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            NrTopics::Auto => serializer.serialize_str("auto"),
            NrTopics::Fixed(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for NrTopics {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = NrTopics;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"auto\" or a positive integer")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<NrTopics, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<NrTopics, E> {
                Ok(NrTopics::Fixed(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<NrTopics, E> {
                if v < 0 {
                    Err(E::custom("topic count cannot be negative"))
                } else {
                    Ok(NrTopics::Fixed(v as usize))
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// Terms whose final weights get multiplied, with the multiplier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedBoostConfig {
    pub seed_words: BTreeSet<String>,
    pub seed_multiplier: f64,
}

impl SeedBoostConfig {
    pub fn new(
        seed_words: impl IntoIterator<Item = String>,
        seed_multiplier: f64,
    ) -> Result<Self, TopicsError> {
        if !(seed_multiplier > 0.0 && seed_multiplier.is_finite()) {
            return Err(TopicsError::BadMultiplier(seed_multiplier));
        }
        Ok(Self { seed_words: seed_words.into_iter().collect(), seed_multiplier })
    }
}

/// Expands a token list into space-joined n-grams for the given range.
pub fn ngrams(tokens: &[String], range: (usize, usize)) -> Vec<String> {
    let mut out = Vec::new();
    for n in range.0..=range.1 {
        for window in tokens.windows(n) {
            out.push(window.join(" "));
        }
    }
    out
}

/// Sparse document-term counts over a sorted vocabulary.
#[derive(Clone, Debug)]
pub struct Vectorizer {
    n_gram_range: (usize, usize),
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<Vec<(usize, u32)>>,
}

impl Vectorizer {
    pub fn n_gram_range(&self) -> (usize, usize) {
        self.n_gram_range
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn n_docs(&self) -> usize {
        self.counts.len()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_counts(&self, doc: usize) -> &[(usize, u32)] {
        &self.counts[doc]
    }

    /// Rebuilds a vectorizer from a stored vocabulary, without counts. The
    /// result can serve lookups and reweighting of new count data but holds no
    /// documents of its own.
    pub fn from_vocabulary(
        vocabulary: Vec<String>,
        n_gram_range: (usize, usize),
    ) -> Result<Self, TopicsError> {
        validate_range(n_gram_range)?;
        let index = vocabulary.iter().cloned().zip(0..).collect();
        Ok(Self { n_gram_range, vocabulary, index, counts: Vec::new() })
    }
}

fn validate_range(range: (usize, usize)) -> Result<(), TopicsError> {
    let (lo, hi) = range;
    if lo < 1 || lo > hi || hi > 2 {
        return Err(TopicsError::BadNgramRange(lo, hi));
    }
    Ok(())
}

/// Counts n-grams over the token lists. The vocabulary is sorted, so equal
/// inputs give byte-equal vectorizers.
pub fn fit_vectorizer(
    token_lists: &[Vec<String>],
    n_gram_range: (usize, usize),
) -> Result<Vectorizer, TopicsError> {
    validate_range(n_gram_range)?;
    if token_lists.is_empty() {
        return Err(TopicsError::EmptyCorpus);
    }
    let mut vocabulary: BTreeSet<String> = BTreeSet::new();
    for tokens in token_lists {
        vocabulary.extend(ngrams(tokens, n_gram_range));
    }
    if vocabulary.is_empty() {
        return Err(TopicsError::EmptyVocabulary);
    }
    let vocabulary: Vec<String> = vocabulary.into_iter().collect();
    let index: HashMap<String, usize> = vocabulary.iter().cloned().zip(0..).collect();
    let counts = token_lists
        .iter()
        .map(|tokens| {
            let mut doc: HashMap<usize, u32> = HashMap::new();
            for gram in ngrams(tokens, n_gram_range) {
                *doc.entry(index[&gram]).or_insert(0) += 1;
            }
            let mut doc: Vec<(usize, u32)> = doc.into_iter().collect();
            doc.sort_unstable();
            doc
        })
        .collect();
    Ok(Vectorizer { n_gram_range, vocabulary, index, counts })
}

/// Per-topic term weights; row order follows `topic_ids`.
#[derive(Clone, Debug)]
pub struct TopicTermMatrix {
    pub topic_ids: Vec<i32>,
    pub weights: DenseMatrix,
}

/// Computes the class-based TF-IDF weights for topics `0..k`. Outlier
/// documents contribute to corpus term frequencies but form no class of their
/// own.
pub fn class_tfidf(
    vectorizer: &Vectorizer,
    assignment: &ClusterAssignment,
    boost: Option<&SeedBoostConfig>,
) -> Result<TopicTermMatrix, TopicsError> {
    if assignment.labels.len() != vectorizer.counts.len() {
        return Err(TopicsError::LengthMismatch {
            docs: vectorizer.counts.len(),
            labels: assignment.labels.len(),
        });
    }
    let k = assignment.k;
    let v = vectorizer.vocabulary.len();
    let topic_ids: Vec<i32> = (0..k as i32).collect();
    let mut weights = DenseMatrix::zeros(k, v);
    if k == 0 {
        return Ok(TopicTermMatrix { topic_ids, weights });
    }

    let mut class_counts = vec![0u64; k * v];
    let mut class_totals = vec![0u64; k];
    let mut corpus_freq = vec![0u64; v];
    for (doc, &label) in vectorizer.counts.iter().zip(&assignment.labels) {
        for &(t, c) in doc {
            corpus_freq[t] += c as u64;
            if label >= 0 {
                class_counts[label as usize * v + t] += c as u64;
                class_totals[label as usize] += c as u64;
            }
        }
    }
    for (c, &total) in class_totals.iter().enumerate() {
        if total == 0 {
            return Err(TopicsError::EmptyTopic(c as i32));
        }
    }
    let mean_class_mass = class_totals.iter().sum::<u64>() as f64 / k as f64;

    for c in 0..k {
        let row = weights.row_mut(c);
        for t in 0..v {
            let count = class_counts[c * v + t];
            if count == 0 {
                continue;
            }
            let tf = count as f64 / class_totals[c] as f64;
            let idf = (1.0 + mean_class_mass / corpus_freq[t] as f64).ln();
            row[t] = tf * idf;
        }
    }

    if let Some(boost) = boost {
        for term in &boost.seed_words {
            if let Some(t) = vectorizer.term_index(term) {
                for c in 0..k {
                    let boosted = weights.get(c, t) * boost.seed_multiplier;
                    weights.set(c, t, boosted);
                }
            }
        }
    }
    Ok(TopicTermMatrix { topic_ids, weights })
}

/// One topic as presented to people: its strongest terms and a mechanical
/// name built from the first four.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopicRepresentation {
    pub topic_id: i32,
    pub size: usize,
    pub top_words: Vec<(String, f64)>,
    pub name: String,
    pub llm_label: Option<String>,
}

/// Top-`k_top` positive-weight terms per topic, strongest first, ties broken
/// alphabetically.
pub fn top_k_words(
    tfidf: &TopicTermMatrix,
    vectorizer: &Vectorizer,
    assignment: &ClusterAssignment,
    k_top: usize,
) -> Result<Vec<TopicRepresentation>, TopicsError> {
    if k_top < 1 {
        return Err(TopicsError::BadKTop);
    }
    let mut out = Vec::with_capacity(tfidf.topic_ids.len());
    for (row, &topic_id) in tfidf.weights.rows().zip(&tfidf.topic_ids) {
        let mut terms: Vec<(usize, f64)> =
            row.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(t, w)| (t, *w)).collect();
        terms.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| vectorizer.vocabulary[a.0].cmp(&vectorizer.vocabulary[b.0]))
        });
        terms.truncate(k_top);
        let top_words: Vec<(String, f64)> =
            terms.into_iter().map(|(t, w)| (vectorizer.vocabulary[t].clone(), w)).collect();
        let size = assignment.labels.iter().filter(|&&l| l == topic_id).count();
        let name = auto_name(topic_id, &top_words);
        out.push(TopicRepresentation { topic_id, size, top_words, name, llm_label: None });
    }
    Ok(out)
}

fn auto_name(topic_id: i32, top_words: &[(String, f64)]) -> String {
    let mut name = topic_id.to_string();
    for (term, _) in top_words.iter().take(4) {
        name.push('_');
        name.push_str(term);
    }
    name
}

/// Representation row for the outlier class, used in exports only.
pub fn outlier_representation(assignment: &ClusterAssignment) -> TopicRepresentation {
    TopicRepresentation {
        topic_id: -1,
        size: assignment.labels.iter().filter(|&&l| l == -1).count(),
        top_words: Vec::new(),
        name: "-1_outliers".to_string(),
        llm_label: None,
    }
}

/// Merges the smallest topic into its most similar peer until `nr_topics`
/// remain. `Auto` and targets at or above the current count are identity.
/// Outliers are never touched; weights are recomputed after every merge.
pub fn reduce_topics(
    vectorizer: &Vectorizer,
    assignment: &ClusterAssignment,
    nr_topics: NrTopics,
    boost: Option<&SeedBoostConfig>,
) -> Result<(ClusterAssignment, TopicTermMatrix), TopicsError> {
    let target = match nr_topics {
        NrTopics::Auto => {
            let weights = class_tfidf(vectorizer, assignment, boost)?;
            return Ok((assignment.clone(), weights));
        }
        NrTopics::Fixed(t) if t < 2 => return Err(TopicsError::BadTarget(t)),
        NrTopics::Fixed(t) => t,
    };

    let mut current = assignment.clone();
    let mut tfidf = class_tfidf(vectorizer, &current, boost)?;
    while current.k > target {
        let mut sizes = vec![0usize; current.k];
        for &label in &current.labels {
            if label >= 0 {
                sizes[label as usize] += 1;
            }
        }
        let smallest = sizes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(c, _)| c)
            .unwrap();

        let small_row = tfidf.weights.row(smallest).to_vec();
        let mut best: Option<(usize, f64)> = None;
        for c in 0..current.k {
            if c == smallest {
                continue;
            }
            let sim = embeddings::cosine_similarity(&small_row, tfidf.weights.row(c))
                .expect("topic weight rows are nonzero");
            if best.map_or(true, |(_, b)| sim > b) {
                best = Some((c, sim));
            }
        }
        let (into, _) = best.unwrap();

        let into_after = if into > smallest { into - 1 } else { into } as i32;
        for label in current.labels.iter_mut() {
            let l = *label;
            if l == smallest as i32 {
                *label = into_after;
            } else if l > smallest as i32 {
                *label = l - 1;
            }
        }
        current.k -= 1;
        tfidf = class_tfidf(vectorizer, &current, boost)?;
    }
    Ok((current, tfidf))
}

/// Writes the topic table as CSV `topic,size,name,top_words` with terms
/// pipe-separated.
pub fn write_topic_table(
    path: &Path,
    representations: &[TopicRepresentation],
) -> Result<(), TopicsError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| TopicsError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let as_io = |e: csv::Error| TopicsError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    writer.write_record(["topic", "size", "name", "top_words"]).map_err(as_io)?;
    for rep in representations {
        let words: Vec<&str> = rep.top_words.iter().map(|(t, _)| t.as_str()).collect();
        let name = rep.llm_label.as_deref().unwrap_or(&rep.name);
        writer
            .write_record([
                rep.topic_id.to_string().as_str(),
                rep.size.to_string().as_str(),
                name,
                words.join("|").as_str(),
            ])
            .map_err(as_io)?;
    }
    writer.flush().map_err(|source| TopicsError::Io { path: path.display().to_string(), source })
}

/// Reads a topic table back. Weights are not stored in the table, so the
/// returned representations carry zero weights; names land in `name`.
pub fn read_topic_table(path: &Path) -> Result<Vec<TopicRepresentation>, TopicsError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| TopicsError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let bad = |message: String| TopicsError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let topic_id: i32 = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("row {}: bad topic id", i + 1)))?;
        let size: usize = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("row {}: bad size", i + 1)))?;
        let name = record.get(2).unwrap_or_default().to_string();
        let top_words = record
            .get(3)
            .unwrap_or_default()
            .split('|')
            .filter(|t| !t.is_empty())
            .map(|t| (t.to_string(), 0.0))
            .collect();
        out.push(TopicRepresentation { topic_id, size, top_words, name, llm_label: None });
    }
    Ok(out)
}
