//! Document embeddings: storage formats, provider client, and seed guidance.
//!
//! A matrix is always accompanied by its document ids (same order) and a
//! provider tag, so downstream stages can refuse to mix vectors produced by
//! different models. On disk two formats exist: a human-readable text format
//! with a `civemb v1` header, and little-endian f32 binary next to a JSON
//! sidecar. Values live as f64 in memory; the text format round-trips them
//! bitwise, the binary format at f32 precision.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::httpc;
use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed embedding file {path}: {message}")]
    Format { path: String, message: String },
    #[error("embedding row {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("embedding dimension {0} is too small, need at least 2")]
    Dimension(usize),
    #[error("{ids} ids for {rows} embedding rows")]
    LengthMismatch { ids: usize, rows: usize },
    #[error("no embedding for id `{0}`")]
    MissingId(String),
    #[error("zero vector for `{0}` has no direction")]
    ZeroVector(String),
    #[error("provider mismatch: `{expected}` vs `{got}`")]
    ProviderMismatch { expected: String, got: String },
    #[error("dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider protocol error: {0}")]
    Protocol(String),
    #[error("embedding request failed: {0}")]
    Http(String),
}

/// Embedding vectors for an ordered list of documents.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    doc_ids: Vec<String>,
    provider_tag: String,
    data: DenseMatrix,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(
        doc_ids: Vec<String>,
        data: DenseMatrix,
        provider_tag: impl Into<String>,
    ) -> Result<Self, EmbeddingError> {
        if doc_ids.len() != data.n_rows() {
            return Err(EmbeddingError::LengthMismatch { ids: doc_ids.len(), rows: data.n_rows() });
        }
        if data.n_cols() < 2 {
            return Err(EmbeddingError::Dimension(data.n_cols()));
        }
        for (i, row) in data.rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite(i));
            }
        }
        let mut index = HashMap::with_capacity(doc_ids.len());
        for (i, id) in doc_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbeddingError::Format {
                    path: String::new(),
                    message: format!("duplicate id `{id}`"),
                });
            }
        }
        Ok(Self { doc_ids, provider_tag: provider_tag.into(), data, index })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.data.n_cols()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Extracts the rows for `ids`, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<Self, EmbeddingError> {
        let mut data = DenseMatrix::zeros(ids.len(), self.dimension());
        for (i, id) in ids.iter().enumerate() {
            let row = self.row_of(id).ok_or_else(|| EmbeddingError::MissingId(id.clone()))?;
            data.row_mut(i).copy_from_slice(self.data.row(row));
        }
        Self::new(ids.to_vec(), data, self.provider_tag.clone())
    }

    /// Writes the text format: a `civemb v1 <n> <d> <provider>` header line
    /// followed by one `id<TAB>v1,v2,...` line per document. Floats use the
    /// shortest representation that parses back to the same f64.
    pub fn save_text(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut out = String::new();
        out.push_str(&format!(
            "civemb v1 {} {} {}\n",
            self.len(),
            self.dimension(),
            self.provider_tag
        ));
        for (id, row) in self.doc_ids.iter().zip(self.data.rows()) {
            out.push_str(id);
            out.push('\t');
            out.push_str(&join_floats(row));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| io_err(path, source))
    }

    /// Writes row-major little-endian f32 values to `path` and the
    /// `{n, d, ids, provider_tag}` sidecar to `<path>.json`.
    pub fn save_binary(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut bytes = Vec::with_capacity(self.len() * self.dimension() * 4);
        for value in self.data.data() {
            bytes.extend_from_slice(&(*value as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|source| io_err(path, source))?;
        let sidecar = json!({
            "n": self.len(),
            "d": self.dimension(),
            "ids": self.doc_ids,
            "provider_tag": self.provider_tag,
        });
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar).unwrap())
            .map_err(|source| io_err(&sidecar_path(path), source))
    }

    /// Loads either on-disk format, deciding by the `civemb ` magic.
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let bytes = fs::read(path).map_err(|source| io_err(path, source))?;
        if bytes.starts_with(b"civemb ") {
            Self::parse_text(path, &bytes)
        } else {
            Self::load_binary_bytes(path, &bytes)
        }
    }

    fn parse_text(path: &Path, bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| format_err(path, format!("not utf-8: {e}")))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| format_err(path, "empty file".into()))?;
        let mut parts = header.splitn(5, ' ');
        let (magic, version) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        if magic != "civemb" || version != "v1" {
            return Err(format_err(path, format!("unsupported header `{header}`")));
        }
        let n: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, "bad row count in header".into()))?;
        let d: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, "bad dimension in header".into()))?;
        let provider_tag = parts.next().unwrap_or("").to_string();

        let mut doc_ids = Vec::with_capacity(n);
        let mut data = DenseMatrix::zeros(n, d);
        let mut row = 0usize;
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            if row >= n {
                return Err(format_err(path, format!("more than {n} rows")));
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| format_err(path, format!("line {}: missing tab", lineno + 2)))?;
            let parsed = parse_floats(values)
                .map_err(|m| format_err(path, format!("line {}: {m}", lineno + 2)))?;
            if parsed.len() != d {
                return Err(format_err(
                    path,
                    format!("line {}: {} values, expected {d}", lineno + 2, parsed.len()),
                ));
            }
            doc_ids.push(id.to_string());
            data.row_mut(row).copy_from_slice(&parsed);
            row += 1;
        }
        if row != n {
            return Err(format_err(path, format!("{row} rows, header promised {n}")));
        }
        Self::new(doc_ids, data, provider_tag)
    }

    fn load_binary_bytes(path: &Path, bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let sidecar = sidecar_path(path);
        let raw = fs::read_to_string(&sidecar).map_err(|source| io_err(&sidecar, source))?;
        let meta: BinarySidecar = serde_json::from_str(&raw)
            .map_err(|e| format_err(&sidecar, format!("bad sidecar: {e}")))?;
        let expected = meta.n * meta.d * 4;
        if bytes.len() != expected {
            return Err(format_err(
                path,
                format!("{} bytes, sidecar promises {expected}", bytes.len()),
            ));
        }
        if meta.ids.len() != meta.n {
            return Err(format_err(&sidecar, format!("{} ids for n={}", meta.ids.len(), meta.n)));
        }
        let mut data = DenseMatrix::zeros(meta.n, meta.d);
        let flat = data.data_mut();
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            flat[i] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
        Self::new(meta.ids, data, meta.provider_tag)
    }
}

#[derive(Deserialize)]
struct BinarySidecar {
    n: usize,
    d: usize,
    ids: Vec<String>,
    #[serde(default)]
    provider_tag: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn io_err(path: &Path, source: std::io::Error) -> EmbeddingError {
    EmbeddingError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: String) -> EmbeddingError {
    EmbeddingError::Format { path: path.display().to_string(), message }
}

pub(crate) fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_floats(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad float `{v}`: {e}")))
        .collect()
}

/// Cosine similarity with the result clamped into `[-1, 1]`. A zero vector has
/// no defined angle and is rejected.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        let which = if na == 0.0 { "left operand" } else { "right operand" };
        return Err(EmbeddingError::ZeroVector(which.to_string()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// One taxonomy branch condensed to an anchor direction in embedding space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedTopic {
    pub label: String,
    pub seed_words: Vec<String>,
    pub seed_embedding: Vec<f64>,
    pub provider_tag: String,
}

/// Builds one [`SeedTopic`] per `(label, words)` list. Each word must have a
/// row in `word_embeddings`; the anchor is the unit-normalized mean of the
/// member vectors.
pub fn build_seed_topics(
    lists: &[(String, Vec<String>)],
    word_embeddings: &EmbeddingMatrix,
) -> Result<Vec<SeedTopic>, EmbeddingError> {
    let d = word_embeddings.dimension();
    let mut topics = Vec::with_capacity(lists.len());
    for (label, words) in lists {
        if words.is_empty() {
            return Err(EmbeddingError::Protocol(format!("seed list `{label}` is empty")));
        }
        let mut mean = vec![0.0; d];
        for word in words {
            let row = word_embeddings
                .row_of(word)
                .ok_or_else(|| EmbeddingError::MissingId(word.clone()))?;
            for (m, v) in mean.iter_mut().zip(word_embeddings.vector(row)) {
                *m += v;
            }
        }
        let scale = 1.0 / words.len() as f64;
        mean.iter_mut().for_each(|m| *m *= scale);
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector(label.clone()));
        }
        mean.iter_mut().for_each(|m| *m /= norm);
        topics.push(SeedTopic {
            label: label.clone(),
            seed_words: words.clone(),
            seed_embedding: mean,
            provider_tag: word_embeddings.provider_tag().to_string(),
        });
    }
    Ok(topics)
}

/// Nudges each document toward its most similar seed topic: when the best
/// cosine similarity reaches `blend_threshold` the document vector is replaced
/// by the mean of itself and that seed anchor, otherwise it is left alone.
/// A threshold above 1 therefore disables guidance entirely.
pub fn guide_with_seeds(
    matrix: &EmbeddingMatrix,
    seeds: &[SeedTopic],
    blend_threshold: f64,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if seeds.is_empty() || blend_threshold > 1.0 {
        return Ok(matrix.clone());
    }
    for seed in seeds {
        if seed.provider_tag != matrix.provider_tag() {
            return Err(EmbeddingError::ProviderMismatch {
                expected: matrix.provider_tag().to_string(),
                got: seed.provider_tag.clone(),
            });
        }
        if seed.seed_embedding.len() != matrix.dimension() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: matrix.dimension(),
                got: seed.seed_embedding.len(),
            });
        }
    }
    let mut data = matrix.data.clone();
    for i in 0..matrix.len() {
        let doc = matrix.vector(i);
        if doc.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_seed = 0usize;
        for (s, seed) in seeds.iter().enumerate() {
            let sim = cosine_similarity(doc, &seed.seed_embedding)?;
            if sim > best {
                best = sim;
                best_seed = s;
            }
        }
        if best >= blend_threshold {
            let anchor = &seeds[best_seed].seed_embedding;
            for (out, (d, a)) in data.row_mut(i).iter_mut().zip(doc.iter().zip(anchor)) {
                *out = (d + a) / 2.0;
            }
        }
    }
    EmbeddingMatrix::new(matrix.doc_ids.clone(), data, matrix.provider_tag.clone())
}

/// Configuration for [`EmbedClient`].
#[derive(Clone, Debug)]
pub struct EmbedConfig {
    pub endpoint: String,
    pub model_name: String,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub retries: u32,
    pub cache_dir: Option<PathBuf>,
    pub in_flight: usize,
}

impl EmbedConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            batch_size: 32,
            timeout_secs: 30,
            retries: 2,
            cache_dir: None,
            in_flight: 1,
        }
    }
}

/// HTTP client for the embedding provider. Requests are batched; individual
/// texts are cached on disk keyed by model and text hash, so re-running a
/// pipeline only pays for documents it has not seen.
pub struct EmbedClient {
    config: EmbedConfig,
    agent: ureq::Agent,
}

impl EmbedClient {
    pub fn new(config: EmbedConfig) -> Self {
        let agent = httpc::build_agent(config.timeout_secs);
        Self { config, agent }
    }

    pub fn provider_tag(&self) -> &str {
        &self.config.model_name
    }

    /// Embeds `texts`, returning a matrix whose rows follow `ids` order.
    pub fn fetch_embeddings(
        &self,
        ids: &[String],
        texts: &[String],
    ) -> Result<EmbeddingMatrix, EmbeddingError> {
        if ids.len() != texts.len() {
            return Err(EmbeddingError::LengthMismatch { ids: ids.len(), rows: texts.len() });
        }
        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        let mut misses = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            match self.cache_read(text) {
                Some(vector) => vectors[i] = Some(vector),
                None => misses.push(i),
            }
        }

        let batch_size = self.config.batch_size.max(1);
        let batches: Vec<&[usize]> = misses.chunks(batch_size).collect();
        let fetched: Vec<(usize, Vec<Vec<f64>>)> = if self.config.in_flight > 1 {
            self.fetch_batches_parallel(&batches, texts)?
        } else {
            let mut out = Vec::with_capacity(batches.len());
            for (b, batch) in batches.iter().enumerate() {
                out.push((b, self.fetch_batch(batch, texts)?));
            }
            out
        };

        for (b, batch_vectors) in fetched {
            for (&i, vector) in batches[b].iter().zip(batch_vectors) {
                self.cache_write(&texts[i], &vector);
                vectors[i] = Some(vector);
            }
        }

        let d = vectors.iter().flatten().next().map(Vec::len).unwrap_or(0);
        let mut data = DenseMatrix::zeros(ids.len(), d);
        for (i, vector) in vectors.into_iter().enumerate() {
            let vector = vector.ok_or_else(|| {
                EmbeddingError::Protocol(format!("provider returned no vector for `{}`", ids[i]))
            })?;
            if vector.len() != d {
                return Err(EmbeddingError::Protocol(format!(
                    "row {i} has dimension {}, expected {d}",
                    vector.len()
                )));
            }
            data.row_mut(i).copy_from_slice(&vector);
        }
        EmbeddingMatrix::new(ids.to_vec(), data, self.config.model_name.clone())
    }

    fn fetch_batches_parallel(
        &self,
        batches: &[&[usize]],
        texts: &[String],
    ) -> Result<Vec<(usize, Vec<Vec<f64>>)>, EmbeddingError> {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Vec<Vec<f64>>, EmbeddingError>>>> =
            Mutex::new((0..batches.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..self.config.in_flight.min(batches.len().max(1)) {
                scope.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    if b >= batches.len() {
                        break;
                    }
                    let result = self.fetch_batch(batches[b], texts);
                    results.lock().unwrap()[b] = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(batches.len());
        for (b, slot) in results.into_inner().unwrap().into_iter().enumerate() {
            let vectors = slot
                .unwrap_or_else(|| Err(EmbeddingError::Protocol("batch never ran".into())))?;
            out.push((b, vectors));
        }
        Ok(out)
    }

    fn fetch_batch(
        &self,
        batch: &[usize],
        texts: &[String],
    ) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let input: Vec<&str> = batch.iter().map(|&i| texts[i].as_str()).collect();
        let payload = json!({ "model": self.config.model_name, "input": input });
        let response =
            httpc::post_json(&self.agent, &self.config.endpoint, &payload, self.config.retries)
                .map_err(EmbeddingError::Http)?;
        let vectors = response
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbeddingError::Protocol("response has no `vectors` array".into()))?;
        if vectors.len() != batch.len() {
            return Err(EmbeddingError::Protocol(format!(
                "{} vectors for {} inputs",
                vectors.len(),
                batch.len()
            )));
        }
        vectors
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| EmbeddingError::Protocol("vector is not an array".into()))?
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .ok_or_else(|| EmbeddingError::Protocol("non-numeric value".into()))
                    })
                    .collect()
            })
            .collect()
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        Some(dir.join(&self.config.model_name).join(cache_key(&self.config.model_name, text)))
    }

    fn cache_read(&self, text: &str) -> Option<Vec<f64>> {
        let path = self.cache_path(text)?;
        let line = fs::read_to_string(path).ok()?;
        parse_floats(line.trim()).ok()
    }

    fn cache_write(&self, text: &str, vector: &[f64]) {
        let Some(path) = self.cache_path(text) else { return };
        if let Some(parent) = path.parent() {
            if fs::create_dir_all(parent).is_err() {
                return;
            }
        }
        if let Ok(mut file) = fs::File::create(&path) {
            let _ = writeln!(file, "{}", join_floats(vector));
        }
    }
}

/// Content hash used for on-disk caches: sha256 over the model name and the
/// exact text, separated by a NUL so neither can smear into the other.
pub fn cache_key(model: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn matrix(rows: &[(&str, &[f64])], tag: &str) -> EmbeddingMatrix {
        let ids = rows.iter().map(|(id, _)| id.to_string()).collect();
        let data = DenseMatrix::from_rows(&rows.iter().map(|(_, r)| r.to_vec()).collect::<Vec<_>>());
        EmbeddingMatrix::new(ids, data, tag).unwrap()
    }

    #[test]
    fn constructor_validates_shape_and_values() {
        let data = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let err = EmbeddingMatrix::new(vec!["a".into(), "b".into()], data.clone(), "m").unwrap_err();
        assert!(matches!(err, EmbeddingError::LengthMismatch { ids: 2, rows: 1 }));

        let thin = DenseMatrix::from_rows(&[vec![1.0]]);
        let err = EmbeddingMatrix::new(vec!["a".into()], thin, "m").unwrap_err();
        assert!(matches!(err, EmbeddingError::Dimension(1)));

        let bad = DenseMatrix::from_rows(&[vec![1.0, f64::NAN]]);
        let err = EmbeddingMatrix::new(vec!["a".into()], bad, "m").unwrap_err();
        assert!(matches!(err, EmbeddingError::NonFinite(0)));
    }

    #[test]
    fn text_format_round_trips_bitwise() {
        let m = matrix(
            &[("a", &[0.1, -2.5e-17, 3.0]), ("b", &[1.0 / 3.0, f64::MIN_POSITIVE, -0.0])],
            "modelo x",
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.civemb");
        m.save_text(&path).unwrap();
        let back = EmbeddingMatrix::load(&path).unwrap();
        assert_eq!(back.doc_ids(), m.doc_ids());
        assert_eq!(back.provider_tag(), "modelo x");
        for (a, b) in back.matrix().data().iter().zip(m.matrix().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_format_round_trips_at_f32() {
        let m = matrix(&[("a", &[0.5, -1.25, 8.0]), ("b", &[2.0, 0.0, -0.125])], "m");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        m.save_binary(&path).unwrap();
        let back = EmbeddingMatrix::load(&path).unwrap();
        assert_eq!(back.matrix().data(), m.matrix().data());
        assert_eq!(back.doc_ids(), m.doc_ids());
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let m = matrix(&[("a", &[0.5, 1.0])], "m");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        m.save_binary(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        let err = EmbeddingMatrix::load(&path).unwrap_err();
        assert!(matches!(err, EmbeddingError::Format { .. }));
    }

    #[test]
    fn text_row_count_must_match_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.civemb");
        fs::write(&path, "civemb v1 2 2 m\na\t1.0,2.0\n").unwrap();
        let err = EmbeddingMatrix::load(&path).unwrap_err();
        assert!(matches!(err, EmbeddingError::Format { .. }));
    }

    #[test]
    fn subset_preserves_requested_order() {
        let m = matrix(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])], "m");
        let sub = m.subset(&["c".into(), "a".into()]).unwrap();
        assert_eq!(sub.doc_ids(), &["c".to_string(), "a".to_string()]);
        assert_eq!(sub.vector(0), &[1.0, 1.0]);
        let err = m.subset(&["z".into()]).unwrap_err();
        assert!(matches!(err, EmbeddingError::MissingId(id) if id == "z"));
    }

    #[test]
    fn cosine_basics() {
        assert_relative_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(cosine_similarity(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(cosine_similarity(&[1.0, 0.0], &[-3.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroVector(_))
        ));
    }

    #[test]
    fn seed_topics_are_unit_normalized_means() {
        let words = matrix(&[("saúde", &[2.0, 0.0]), ("hospital", &[0.0, 2.0])], "m");
        let topics = build_seed_topics(
            &[("Saúde".to_string(), vec!["saúde".to_string(), "hospital".to_string()])],
            &words,
        )
        .unwrap();
        let e = &topics[0].seed_embedding;
        assert_relative_eq!(e[0], (0.5f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e[1], (0.5f64).sqrt(), epsilon = 1e-12);
        assert_eq!(topics[0].provider_tag, "m");

        let err = build_seed_topics(&[("X".to_string(), vec!["faltando".to_string()])], &words)
            .unwrap_err();
        assert!(matches!(err, EmbeddingError::MissingId(w) if w == "faltando"));
    }

    #[test]
    fn guidance_blends_only_above_threshold() {
        let docs = matrix(&[("perto", &[1.0, 0.1]), ("longe", &[-1.0, 0.0])], "m");
        let seeds = vec![SeedTopic {
            label: "eixo".into(),
            seed_words: vec!["x".into()],
            seed_embedding: vec![1.0, 0.0],
            provider_tag: "m".into(),
        }];
        let guided = guide_with_seeds(&docs, &seeds, 0.0).unwrap();
        assert_eq!(guided.vector(0), &[1.0, 0.05]);
        assert_eq!(guided.vector(1), &[-1.0, 0.0]);

        let off = guide_with_seeds(&docs, &seeds, 1.5).unwrap();
        assert_eq!(off.matrix().data(), docs.matrix().data());
    }

    #[test]
    fn guidance_rejects_foreign_seeds() {
        let docs = matrix(&[("a", &[1.0, 0.0])], "m1");
        let seeds = vec![SeedTopic {
            label: "x".into(),
            seed_words: vec![],
            seed_embedding: vec![1.0, 0.0],
            provider_tag: "m2".into(),
        }];
        let err = guide_with_seeds(&docs, &seeds, 0.0).unwrap_err();
        assert!(matches!(err, EmbeddingError::ProviderMismatch { .. }));
    }

    #[test]
    fn cache_hits_bypass_the_network() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = EmbedConfig::new("http://127.0.0.1:1/unreachable", "modelo");
        config.cache_dir = Some(dir.path().to_path_buf());
        let cache = dir.path().join("modelo");
        fs::create_dir_all(&cache).unwrap();
        fs::write(cache.join(cache_key("modelo", "oi")), "1.0,2.0\n").unwrap();
        fs::write(cache.join(cache_key("modelo", "tchau")), "3.0,4.0\n").unwrap();

        let client = EmbedClient::new(config);
        let m = client
            .fetch_embeddings(&["a".into(), "b".into()], &["oi".into(), "tchau".into()])
            .unwrap();
        assert_eq!(m.vector(0), &[1.0, 2.0]);
        assert_eq!(m.vector(1), &[3.0, 4.0]);
        assert_eq!(m.provider_tag(), "modelo");
    }

    #[test]
    fn cache_key_separates_model_and_text() {
        assert_ne!(cache_key("ab", "c"), cache_key("a", "bc"));
        assert_eq!(cache_key("m", "t"), cache_key("m", "t"));
        assert_eq!(cache_key("m", "t").len(), 64);
    }
}
