//! The full fit/transform pipeline: embeddings → optional seed guidance →
//! reduction → clustering → topic representation → topic count reduction.
//!
//! A fitted model carries everything transform needs (reducer, centroids,
//! reach thresholds, vectorizer, weights) and round-trips through a bundle
//! directory byte-for-byte under a fixed config and seed.

use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterAssignment, ClusterParams, ClusteringError};
use crate::corpus::{Document, PreprocessConfig};
use crate::embeddings::{self, EmbeddingError, EmbeddingMatrix, SeedTopic};
use crate::matrix::DenseMatrix;
use crate::reduction::{self, ReducerModel, ReductionError};
use crate::taxonomy::Taxonomy;
use crate::topics::{
    self, NrTopics, SeedBoostConfig, TopicRepresentation, TopicTermMatrix, TopicsError,
    Vectorizer,
};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Topics(#[from] TopicsError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model bundle: {0}")]
    Bundle(String),
}

fn stage<E: Into<StageError>>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage: name, source: e.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "unsup")]
    Unsupervised,
    #[serde(alias = "semi")]
    Semisupervised,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Unsupervised => write!(f, "unsupervised"),
            Mode::Semisupervised => write!(f, "semisupervised"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unsup" | "unsupervised" => Ok(Mode::Unsupervised),
            "semi" | "semisupervised" => Ok(Mode::Semisupervised),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Every knob of a run. Deserializes leniently: absent fields take the
/// defaults below, so a config file only has to name what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub n_gram_range: (usize, usize),
    pub nr_topics: NrTopics,
    pub min_topic_size: usize,
    pub seed: u64,
    pub seed_multiplier: f64,
    pub blend_threshold: f64,
    pub target_dim: usize,
    pub k_top: usize,
    pub min_samples: Option<usize>,
    pub train_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Unsupervised,
            n_gram_range: (1, 1),
            nr_topics: NrTopics::Fixed(70),
            min_topic_size: 10,
            seed: 0,
            seed_multiplier: 2.0,
            blend_threshold: 0.0,
            target_dim: 5,
            k_top: 10,
            min_samples: None,
            train_fraction: 0.8,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let (lo, hi) = self.n_gram_range;
        if lo < 1 || lo > hi || hi > 2 {
            return bad(format!("n_gram_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= 2"));
        }
        if self.min_topic_size < 2 {
            return bad(format!("min_topic_size {} must be at least 2", self.min_topic_size));
        }
        if let NrTopics::Fixed(k) = self.nr_topics {
            if k < 2 {
                return bad(format!("nr_topics {k} must be at least 2"));
            }
        }
        if !(self.seed_multiplier > 0.0 && self.seed_multiplier.is_finite()) {
            return bad(format!("seed_multiplier {} must be positive", self.seed_multiplier));
        }
        if !self.blend_threshold.is_finite() {
            return bad("blend_threshold must be finite".to_string());
        }
        if self.target_dim < 2 {
            return bad(format!("target_dim {} must be at least 2", self.target_dim));
        }
        if self.k_top < 1 {
            return bad("k_top must be at least 1".to_string());
        }
        if let Some(ms) = self.min_samples {
            if ms < 1 || ms > self.min_topic_size {
                return bad(format!(
                    "min_samples {ms} must lie in 1..={}",
                    self.min_topic_size
                ));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            ));
        }
        Ok(())
    }

    fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_topic_size)
    }
}

/// Seed material for semi-supervised runs: embedding-space seed topics for
/// document blending plus the c-TF-IDF boost terms.
#[derive(Clone, Debug)]
pub struct Guidance {
    pub seed_topics: Vec<SeedTopic>,
    pub boost: SeedBoostConfig,
}

impl Guidance {
    /// Derives both guidance mechanisms from a taxonomy: seed topics from the
    /// per-domain phrase lists (embedded via `phrase_embeddings`, keyed by
    /// phrase text) and boost terms from the preprocessed phrases.
    pub fn from_taxonomy(
        taxonomy: &Taxonomy,
        phrase_embeddings: &EmbeddingMatrix,
        preprocess: &PreprocessConfig,
        seed_multiplier: f64,
    ) -> Result<Self, PipelineError> {
        let lists = taxonomy.seed_phrase_lists();
        let seed_topics =
            embeddings::build_seed_topics(&lists, phrase_embeddings).map_err(stage("guidance"))?;
        let terms = taxonomy.seed_boost_terms(preprocess);
        let boost = SeedBoostConfig::new(terms, seed_multiplier).map_err(stage("guidance"))?;
        Ok(Guidance { seed_topics, boost })
    }
}

#[derive(Clone, Debug)]
pub struct FittedModel {
    pub config: PipelineConfig,
    pub reducer: ReducerModel,
    pub cluster_params: ClusterParams,
    /// K × target_dim mean member vectors in reduced space.
    pub centroids: DenseMatrix,
    /// Per topic, the largest core distance among its members at fit time.
    pub reach_thresholds: Vec<f64>,
    pub vectorizer: Vectorizer,
    pub weights: TopicTermMatrix,
    /// Outlier row first, then topics 0..K−1.
    pub representations: Vec<TopicRepresentation>,
    pub provider_tag: String,
    pub seed_topics: Option<Vec<SeedTopic>>,
}

impl FittedModel {
    pub fn k(&self) -> usize {
        self.centroids.n_rows()
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub assignment: ClusterAssignment,
}

fn check_alignment(docs: &[Document], embeddings: &EmbeddingMatrix) -> Result<(), PipelineError> {
    if docs.len() != embeddings.len() {
        return Err(PipelineError::Config(format!(
            "corpus has {} documents but embeddings have {} rows",
            docs.len(),
            embeddings.len()
        )));
    }
    for (i, (doc, id)) in docs.iter().zip(embeddings.doc_ids()).enumerate() {
        if doc.id != *id {
            return Err(PipelineError::Config(format!(
                "row {i} is `{}` in the corpus but `{id}` in the embeddings",
                doc.id
            )));
        }
    }
    Ok(())
}

pub fn fit(
    docs: &[Document],
    embeddings: &EmbeddingMatrix,
    config: &PipelineConfig,
    guidance: Option<&Guidance>,
) -> Result<FitOutcome, PipelineError> {
    config.validate()?;
    match (config.mode, guidance) {
        (Mode::Semisupervised, None) => {
            return Err(PipelineError::Config(
                "semisupervised mode requires seed guidance".to_string(),
            ));
        }
        (Mode::Unsupervised, Some(_)) => {
            return Err(PipelineError::Config(
                "unsupervised mode does not accept seed guidance".to_string(),
            ));
        }
        _ => {}
    }
    if docs.is_empty() {
        return Err(PipelineError::Config("corpus is empty".to_string()));
    }
    check_alignment(docs, embeddings)?;

    let guided = match guidance {
        Some(g) => embeddings::guide_with_seeds(embeddings, &g.seed_topics, config.blend_threshold)
            .map_err(stage("guidance"))?,
        None => embeddings.clone(),
    };

    let cap = guided.len().saturating_sub(1).min(guided.dimension().saturating_sub(1));
    let target_dim = config.target_dim.min(cap).max(2);
    let reducer = reduction::fit_reducer(&guided, target_dim).map_err(stage("reduction"))?;
    let reduced = reduction::transform(&reducer, &guided).map_err(stage("reduction"))?;

    let params = ClusterParams::new(config.min_topic_size, config.effective_min_samples())
        .map_err(stage("clustering"))?;
    let clustering = clustering::fit(reduced.matrix(), &params).map_err(stage("clustering"))?;

    let token_lists: Vec<Vec<String>> = docs.iter().map(|d| d.token_list.clone()).collect();
    let vectorizer =
        topics::fit_vectorizer(&token_lists, config.n_gram_range).map_err(stage("vectorization"))?;

    let boost = guidance.map(|g| &g.boost);
    let (assignment, weights) =
        topics::reduce_topics(&vectorizer, &clustering.assignment, config.nr_topics, boost)
            .map_err(stage("topics"))?;

    let mut representations = vec![topics::outlier_representation(&assignment)];
    representations.extend(
        topics::top_k_words(&weights, &vectorizer, &assignment, config.k_top)
            .map_err(stage("topics"))?,
    );

    let k = assignment.k;
    let dim = reduced.dimension();
    let mut centroids = DenseMatrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    let mut reach_thresholds = vec![0.0f64; k];
    for (i, &label) in assignment.labels.iter().enumerate() {
        if label < 0 {
            continue;
        }
        let t = label as usize;
        let row = reduced.matrix().row(i);
        for (acc, v) in centroids.row_mut(t).iter_mut().zip(row) {
            *acc += v;
        }
        counts[t] += 1;
        reach_thresholds[t] = reach_thresholds[t].max(clustering.core_distances[i]);
    }
    for t in 0..k {
        // Every 0..k label is populated after compaction, so counts[t] > 0.
        for v in centroids.row_mut(t) {
            *v /= counts[t] as f64;
        }
    }

    let model = FittedModel {
        config: config.clone(),
        reducer,
        cluster_params: params,
        centroids,
        reach_thresholds,
        vectorizer,
        weights,
        representations,
        provider_tag: embeddings.provider_tag().to_string(),
        seed_topics: guidance.map(|g| g.seed_topics.clone()),
    };
    Ok(FitOutcome { model, assignment })
}

/// Assign unseen documents to fitted topics: project with the fitted reducer
/// (after the same seed blending as fit, for semi-supervised models), then
/// take the nearest centroid unless the point lies beyond that cluster's
/// reach threshold.
pub fn transform(
    model: &FittedModel,
    docs: &[Document],
    embeddings: &EmbeddingMatrix,
) -> Result<ClusterAssignment, PipelineError> {
    check_alignment(docs, embeddings)?;
    if docs.is_empty() {
        return Ok(ClusterAssignment { labels: Vec::new(), probabilities: Vec::new(), k: model.k() });
    }
    if embeddings.provider_tag() != model.provider_tag {
        return Err(PipelineError::Config(format!(
            "embeddings come from `{}` but the model was fit on `{}`",
            embeddings.provider_tag(),
            model.provider_tag
        )));
    }
    if embeddings.dimension() != model.reducer.input_dim() {
        return Err(PipelineError::Config(format!(
            "embeddings have {} dimensions but the model expects {}",
            embeddings.dimension(),
            model.reducer.input_dim()
        )));
    }

    let guided = match &model.seed_topics {
        Some(seeds) => {
            embeddings::guide_with_seeds(embeddings, seeds, model.config.blend_threshold)
                .map_err(stage("guidance"))?
        }
        None => embeddings.clone(),
    };
    let reduced = reduction::transform(&model.reducer, &guided).map_err(stage("reduction"))?;

    let k = model.k();
    let mut labels = Vec::with_capacity(docs.len());
    let mut probabilities = Vec::with_capacity(docs.len());
    for row in reduced.matrix().rows() {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..k {
            let centroid = model.centroids.row(t);
            let sq: f64 = row.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, cur)| sq < cur) {
                best = Some((t, sq));
            }
        }
        match best {
            Some((t, sq)) => {
                let dist = sq.sqrt();
                let reach = model.reach_thresholds[t];
                if dist <= reach {
                    labels.push(t as i32);
                    probabilities.push(if reach > 0.0 { 1.0 - dist / reach } else { 1.0 });
                } else {
                    labels.push(-1);
                    probabilities.push(0.0);
                }
            }
            None => {
                labels.push(-1);
                probabilities.push(0.0);
            }
        }
    }
    Ok(ClusterAssignment { labels, probabilities, k })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    provider_tag: String,
    cluster_params: ClusterParams,
    centroids: DenseMatrix,
    reach_thresholds: Vec<f64>,
    seed_topics: Option<Vec<SeedTopic>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsSidecar {
    rows: usize,
    cols: usize,
    topic_ids: Vec<i32>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| PipelineError::Bundle(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Bundle(format!("{}: {e}", path.display())))
}

/// Writes the model bundle: config.json, reducer.json, clusters.csv,
/// vocabulary.txt, weights.bin (+ .json sidecar), topics.csv, model.json.
pub fn save_bundle(
    outcome: &FitOutcome,
    doc_ids: &[String],
    dir: &Path,
) -> Result<(), PipelineError> {
    if doc_ids.len() != outcome.assignment.labels.len() {
        return Err(PipelineError::Bundle(format!(
            "{} doc ids for {} assignments",
            doc_ids.len(),
            outcome.assignment.labels.len()
        )));
    }
    std::fs::create_dir_all(dir)
        .map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    let model = &outcome.model;

    write_json(&dir.join("config.json"), &model.config)?;
    model
        .reducer
        .save(&dir.join("reducer.json"))
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;
    clustering::write_assignment_csv(&dir.join("clusters.csv"), doc_ids, &outcome.assignment)
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;

    let vocab_path = dir.join("vocabulary.txt");
    let mut vocab_text = model.vectorizer.vocabulary().join("\n");
    vocab_text.push('\n');
    std::fs::write(&vocab_path, vocab_text)
        .map_err(|source| PipelineError::Io { path: vocab_path.display().to_string(), source })?;

    let weights_path = dir.join("weights.bin");
    let mut bytes = Vec::with_capacity(model.weights.weights.data().len() * 4);
    for v in model.weights.weights.data() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(&weights_path, bytes)
        .map_err(|source| PipelineError::Io { path: weights_path.display().to_string(), source })?;
    write_json(
        &dir.join("weights.bin.json"),
        &WeightsSidecar {
            rows: model.weights.weights.n_rows(),
            cols: model.weights.weights.n_cols(),
            topic_ids: model.weights.topic_ids.clone(),
        },
    )?;

    topics::write_topic_table(&dir.join("topics.csv"), &model.representations)
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;
    write_json(
        &dir.join("model.json"),
        &ModelFile {
            provider_tag: model.provider_tag.clone(),
            cluster_params: model.cluster_params,
            centroids: model.centroids.clone(),
            reach_thresholds: model.reach_thresholds.clone(),
            seed_topics: model.seed_topics.clone(),
        },
    )?;
    Ok(())
}

/// Reads a bundle back into a transform-ready model. Topic weights come back
/// at float32 precision; per-document counts are not part of a bundle, so the
/// vectorizer starts empty.
pub fn load_bundle(dir: &Path) -> Result<FittedModel, PipelineError> {
    let config: PipelineConfig = read_json(&dir.join("config.json"))?;
    config.validate()?;
    let reducer = ReducerModel::load(&dir.join("reducer.json"))
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;
    let model_file: ModelFile = read_json(&dir.join("model.json"))?;

    let vocab_path = dir.join("vocabulary.txt");
    let vocab_text = std::fs::read_to_string(&vocab_path)
        .map_err(|source| PipelineError::Io { path: vocab_path.display().to_string(), source })?;
    let vocabulary: Vec<String> =
        vocab_text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    let vectorizer = Vectorizer::from_vocabulary(vocabulary, config.n_gram_range)
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;

    let sidecar: WeightsSidecar = read_json(&dir.join("weights.bin.json"))?;
    let weights_path = dir.join("weights.bin");
    let bytes = std::fs::read(&weights_path)
        .map_err(|source| PipelineError::Io { path: weights_path.display().to_string(), source })?;
    if bytes.len() != sidecar.rows * sidecar.cols * 4 {
        return Err(PipelineError::Bundle(format!(
            "weights.bin holds {} bytes, expected {} for {}x{}",
            bytes.len(),
            sidecar.rows * sidecar.cols * 4,
            sidecar.rows,
            sidecar.cols
        )));
    }
    if sidecar.topic_ids.len() != sidecar.rows {
        return Err(PipelineError::Bundle(format!(
            "sidecar lists {} topic ids for {} weight rows",
            sidecar.topic_ids.len(),
            sidecar.rows
        )));
    }
    let mut weights = DenseMatrix::zeros(sidecar.rows, sidecar.cols);
    for (slot, chunk) in weights.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
        *slot = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }

    let representations = topics::read_topic_table(&dir.join("topics.csv"))
        .map_err(|e| PipelineError::Bundle(e.to_string()))?;

    if model_file.centroids.n_rows() != model_file.reach_thresholds.len() {
        return Err(PipelineError::Bundle(format!(
            "{} centroids with {} reach thresholds",
            model_file.centroids.n_rows(),
            model_file.reach_thresholds.len()
        )));
    }
    if model_file.centroids.n_rows() != sidecar.rows {
        return Err(PipelineError::Bundle(format!(
            "{} centroids with {} weight rows",
            model_file.centroids.n_rows(),
            sidecar.rows
        )));
    }

    Ok(FittedModel {
        config,
        reducer,
        cluster_params: model_file.cluster_params,
        centroids: model_file.centroids,
        reach_thresholds: model_file.reach_thresholds,
        vectorizer,
        weights: TopicTermMatrix { topic_ids: sidecar.topic_ids, weights },
        representations,
        provider_tag: model_file.provider_tag,
        seed_topics: model_file.seed_topics,
    })
}
