//! Grid search over pipeline hyperparameters, embedding-model comparison,
//! external evaluation against stored labels, and CSV report emission.
//!
//! Runs re-sample the train split per repetition (seed = base + repetition),
//! so repeated cells measure split sensitivity rather than re-running one
//! deterministic computation. Wall times live in their own file so every
//! other report is byte-stable.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterAssignment;
use crate::corpus::{self, Corpus, Document};
use crate::embeddings::EmbeddingMatrix;
use crate::llm::StoredLabel;
use crate::metrics::{self, Contingency, MetricsError};
use crate::pipeline::{self, Guidance, PipelineConfig};
use crate::topics::NrTopics;

#[derive(Debug, Error)]
pub enum ExperimentsError {
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("bad comparison setup: {0}")]
    Comparison(String),
    #[error("run {config_id} rep {repetition} failed: {message}")]
    Run { config_id: String, repetition: usize, message: String },
    #[error("no {level} overlap left after filtering")]
    NoOverlap { level: &'static str },
    #[error("no run records to report")]
    EmptyRecords,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_gram_ranges: Vec<(usize, usize)>,
    pub nr_topics_values: Vec<NrTopics>,
    pub min_topic_sizes: Vec<usize>,
    pub repetitions: usize,
    pub base_seed: u64,
}

/// One grid cell: the hyperparameters that vary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSpec {
    pub n_gram_range: (usize, usize),
    pub nr_topics: NrTopics,
    pub min_topic_size: usize,
}

impl CellSpec {
    pub fn config_id(&self) -> String {
        format!(
            "ng{}-{}_nr{}_mts{}",
            self.n_gram_range.0, self.n_gram_range.1, self.nr_topics, self.min_topic_size
        )
    }
}

impl GridSpec {
    /// The published sweep: both n-gram ranges, eight topic-count settings,
    /// six minimum sizes, ten repetitions.
    pub fn standard() -> Self {
        GridSpec {
            n_gram_ranges: vec![(1, 1), (1, 2)],
            nr_topics_values: vec![
                NrTopics::Fixed(10),
                NrTopics::Fixed(30),
                NrTopics::Fixed(50),
                NrTopics::Fixed(70),
                NrTopics::Fixed(90),
                NrTopics::Fixed(110),
                NrTopics::Fixed(130),
                NrTopics::Auto,
            ],
            min_topic_sizes: vec![3, 5, 10, 15, 20, 25],
            repetitions: 10,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentsError> {
        if self.repetitions < 1 {
            return Err(ExperimentsError::Grid("repetitions must be at least 1".to_string()));
        }
        if self.n_gram_ranges.is_empty()
            || self.nr_topics_values.is_empty()
            || self.min_topic_sizes.is_empty()
        {
            return Err(ExperimentsError::Grid("every axis needs at least one value".to_string()));
        }
        Ok(())
    }

    /// Cells in sweep order: n-gram range, then topic count, then size.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &n_gram_range in &self.n_gram_ranges {
            for &nr_topics in &self.nr_topics_values {
                for &min_topic_size in &self.min_topic_sizes {
                    cells.push(CellSpec { n_gram_range, nr_topics, min_topic_size });
                }
            }
        }
        cells
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config_id: String,
    pub n_gram_range: (usize, usize),
    pub nr_topics: NrTopics,
    pub min_topic_size: usize,
    pub repetition: usize,
    pub seed: u64,
    pub k: usize,
    pub nc: f64,
    pub nd: f64,
    pub ws: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug)]
pub struct RunFailure {
    pub config_id: String,
    pub repetition: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct CellAggregate {
    pub config_id: String,
    pub n_gram_range: (usize, usize),
    pub nr_topics: NrTopics,
    pub min_topic_size: usize,
    pub runs_ok: usize,
    pub partial: bool,
    pub mean_k: f64,
    pub mean_nc: f64,
    pub mean_nd: f64,
    pub mean_ws: f64,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    /// Successful runs in sweep order (cell by cell, repetitions ascending).
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// One row per cell, sorted by mean WS descending.
    pub aggregates: Vec<CellAggregate>,
}

fn worker_count(workers: usize, jobs: usize) -> usize {
    let auto = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    (if workers == 0 { auto } else { workers }).min(jobs).max(1)
}

/// Fit one cell configuration on a fresh split and score it on the train
/// side.
fn run_once(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    cell: &CellSpec,
    repetition: usize,
    template: &PipelineConfig,
    guidance: Option<&Guidance>,
) -> Result<RunRecord, String> {
    let seed = template.seed + repetition as u64;
    let config = PipelineConfig {
        n_gram_range: cell.n_gram_range,
        nr_topics: cell.nr_topics,
        min_topic_size: cell.min_topic_size,
        seed,
        ..template.clone()
    };
    let split = corpus::split(corpus, config.train_fraction, seed).map_err(|e| e.to_string())?;
    let train: Vec<Document> = split.train_documents().cloned().collect();
    let ids: Vec<String> = train.iter().map(|d| d.id.clone()).collect();
    let train_embeddings = embeddings.subset(&ids).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let outcome =
        pipeline::fit(&train, &train_embeddings, &config, guidance).map_err(|e| e.to_string())?;
    let wall_secs = start.elapsed().as_secs_f64();

    let token_lists: Vec<Vec<String>> = train.iter().map(|d| d.token_list.clone()).collect();
    let scores = metrics::internal_scores(&outcome.model.representations, &token_lists)
        .map_err(|e| e.to_string())?;

    Ok(RunRecord {
        config_id: cell.config_id(),
        n_gram_range: cell.n_gram_range,
        nr_topics: cell.nr_topics,
        min_topic_size: cell.min_topic_size,
        repetition,
        seed,
        k: outcome.assignment.k,
        nc: scores.nc,
        nd: scores.nd,
        ws: scores.ws,
        wall_secs,
    })
}

/// Sweeps the grid. Individual run failures are collected, the affected cell
/// is flagged partial, and the sweep continues. `workers = 0` uses all
/// available cores.
pub fn run_grid(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    grid: &GridSpec,
    template: &PipelineConfig,
    guidance: Option<&Guidance>,
    workers: usize,
) -> Result<GridOutcome, ExperimentsError> {
    grid.validate()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.repetitions).map(move |r| (c, r)))
        .collect();

    let template = PipelineConfig { seed: grid.base_seed, ..template.clone() };
    let results: Mutex<Vec<Option<Result<RunRecord, String>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(workers, jobs.len()) {
            scope.spawn(|| loop {
                let slot = cursor.fetch_add(1, Ordering::SeqCst);
                if slot >= jobs.len() {
                    break;
                }
                let (c, r) = jobs[slot];
                let outcome = run_once(corpus, embeddings, &cells[c], r, &template, guidance);
                results.lock().unwrap()[slot] = Some(outcome);
            });
        }
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut per_cell: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for (slot, outcome) in results.into_inner().unwrap().into_iter().enumerate() {
        let (c, r) = jobs[slot];
        match outcome.expect("worker filled every slot") {
            Ok(record) => {
                per_cell[c].push(records.len());
                records.push(record);
            }
            Err(message) => failures.push(RunFailure {
                config_id: cells[c].config_id(),
                repetition: r,
                message,
            }),
        }
    }

    let mut aggregates: Vec<CellAggregate> = cells
        .iter()
        .zip(&per_cell)
        .map(|(cell, indices)| {
            let n = indices.len();
            let mean = |f: &dyn Fn(&RunRecord) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    indices.iter().map(|&i| f(&records[i])).sum::<f64>() / n as f64
                }
            };
            CellAggregate {
                config_id: cell.config_id(),
                n_gram_range: cell.n_gram_range,
                nr_topics: cell.nr_topics,
                min_topic_size: cell.min_topic_size,
                runs_ok: n,
                partial: n < grid.repetitions,
                mean_k: mean(&|r| r.k as f64),
                mean_nc: mean(&|r| r.nc),
                mean_nd: mean(&|r| r.nd),
                mean_ws: mean(&|r| r.ws),
            }
        })
        .collect();
    aggregates.sort_by(|a, b| {
        b.mean_ws.total_cmp(&a.mean_ws).then_with(|| a.config_id.cmp(&b.config_id))
    });

    Ok(GridOutcome { records, failures, aggregates })
}

/// One point of a WS-versus-topic-count curve for one embedding model.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub model: String,
    pub nr_topics: NrTopics,
    pub mean_ws: f64,
    pub std_ws: f64,
}

/// Fits every named embedding set across the topic-count sweep under shared
/// seeds and reports mean ± sample standard deviation of WS per point.
pub fn compare_embedding_models(
    corpus: &Corpus,
    models: &[(String, EmbeddingMatrix)],
    nr_topics_values: &[NrTopics],
    template: &PipelineConfig,
    repetitions: usize,
    workers: usize,
) -> Result<Vec<CurvePoint>, ExperimentsError> {
    if models.len() < 2 {
        return Err(ExperimentsError::Comparison(format!(
            "need at least 2 embedding sets, got {}",
            models.len()
        )));
    }
    if nr_topics_values.is_empty() {
        return Err(ExperimentsError::Comparison("topic-count sweep is empty".to_string()));
    }
    if repetitions < 1 {
        return Err(ExperimentsError::Comparison("repetitions must be at least 1".to_string()));
    }
    let mut reference: Vec<&String> = models[0].1.doc_ids().iter().collect();
    reference.sort();
    for (name, matrix) in &models[1..] {
        let mut ids: Vec<&String> = matrix.doc_ids().iter().collect();
        ids.sort();
        if ids != reference {
            return Err(ExperimentsError::Comparison(format!(
                "embedding set `{name}` covers different doc ids than `{}`",
                models[0].0
            )));
        }
    }

    let jobs: Vec<(usize, usize, usize)> = (0..models.len())
        .flat_map(|m| {
            (0..nr_topics_values.len())
                .flat_map(move |v| (0..repetitions).map(move |r| (m, v, r)))
        })
        .collect();
    let results: Mutex<Vec<Option<Result<f64, String>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(workers, jobs.len()) {
            scope.spawn(|| loop {
                let slot = cursor.fetch_add(1, Ordering::SeqCst);
                if slot >= jobs.len() {
                    break;
                }
                let (m, v, r) = jobs[slot];
                let cell = CellSpec {
                    n_gram_range: template.n_gram_range,
                    nr_topics: nr_topics_values[v],
                    min_topic_size: template.min_topic_size,
                };
                let outcome = run_once(corpus, &models[m].1, &cell, r, template, None)
                    .map(|record| record.ws);
                results.lock().unwrap()[slot] = Some(outcome);
            });
        }
    });

    let mut ws = vec![vec![Vec::new(); nr_topics_values.len()]; models.len()];
    for (slot, outcome) in results.into_inner().unwrap().into_iter().enumerate() {
        let (m, v, r) = jobs[slot];
        let value = outcome.expect("worker filled every slot").map_err(|message| {
            ExperimentsError::Run {
                config_id: format!("{}_nr{}", models[m].0, nr_topics_values[v]),
                repetition: r,
                message,
            }
        })?;
        ws[m][v].push(value);
    }

    let mut curve = Vec::new();
    for (m, (name, _)) in models.iter().enumerate() {
        for (v, &nr) in nr_topics_values.iter().enumerate() {
            let values = &ws[m][v];
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() < 2 {
                0.0
            } else {
                let var = values.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>()
                    / (values.len() - 1) as f64;
                var.sqrt()
            };
            curve.push(CurvePoint {
                model: name.clone(),
                nr_topics: nr,
                mean_ws: mean,
                std_ws: std,
            });
        }
    }
    Ok(curve)
}

#[derive(Clone, Debug)]
pub struct ExternalScores {
    pub level: &'static str,
    pub ari: f64,
    pub nmi: f64,
    pub contingency: Contingency,
}

/// Documents dropped before external scoring, by reason.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Exclusions {
    pub outliers: usize,
    pub unlabeled: usize,
    pub no_match_n1: usize,
    pub no_match_n2: usize,
}

#[derive(Clone, Debug)]
pub struct ExternalEvaluation {
    pub n1: ExternalScores,
    pub n2: ExternalScores,
    pub exclusions: Exclusions,
}

/// Scores topic assignments against stored reference labels at both taxonomy
/// levels. Outlier documents, documents without a label row, and `no_match`
/// sides are excluded per level and counted.
pub fn evaluate_external(
    doc_ids: &[String],
    assignment: &ClusterAssignment,
    labels: &[StoredLabel],
) -> Result<ExternalEvaluation, ExperimentsError> {
    if doc_ids.len() != assignment.labels.len() {
        return Err(ExperimentsError::Comparison(format!(
            "{} doc ids for {} assignments",
            doc_ids.len(),
            assignment.labels.len()
        )));
    }
    let by_id: std::collections::HashMap<&str, &StoredLabel> =
        labels.iter().map(|l| (l.doc_id.as_str(), l)).collect();

    let mut exclusions = Exclusions::default();
    let mut n1_topics = Vec::new();
    let mut n1_labels = Vec::new();
    let mut n2_topics = Vec::new();
    let mut n2_labels = Vec::new();
    for (id, &topic) in doc_ids.iter().zip(&assignment.labels) {
        if topic == -1 {
            exclusions.outliers += 1;
            continue;
        }
        let Some(stored) = by_id.get(id.as_str()) else {
            exclusions.unlabeled += 1;
            continue;
        };
        match &stored.n1 {
            Some(n1) => {
                n1_topics.push(topic);
                n1_labels.push(n1.clone());
            }
            None => exclusions.no_match_n1 += 1,
        }
        match &stored.n2 {
            Some(n2) => {
                n2_topics.push(topic);
                n2_labels.push(n2.clone());
            }
            None => exclusions.no_match_n2 += 1,
        }
    }

    let score = |topics: Vec<i32>,
                 labels: Vec<String>,
                 level: &'static str|
     -> Result<ExternalScores, ExperimentsError> {
        if topics.len() < 2 {
            return Err(ExperimentsError::NoOverlap { level });
        }
        Ok(ExternalScores {
            level,
            ari: metrics::adjusted_rand_index(&topics, &labels)?,
            nmi: metrics::normalized_mutual_information(&topics, &labels)?,
            contingency: metrics::contingency(&topics, &labels)?,
        })
    };
    Ok(ExternalEvaluation {
        n1: score(n1_topics, n1_labels, "n1")?,
        n2: score(n2_topics, n2_labels, "n2")?,
        exclusions,
    })
}

/// Everything a report bundle can carry; empty slices and `None` produce
/// header-only files so downstream tooling always finds the same set.
#[derive(Clone, Copy, Debug)]
pub struct ReportInputs<'a> {
    pub records: &'a [RunRecord],
    pub aggregates: &'a [CellAggregate],
    /// (metric, unsupervised value, semisupervised value) rows.
    pub comparison: &'a [(String, f64, f64)],
    pub evaluation: Option<&'a ExternalEvaluation>,
    pub curves: &'a [CurvePoint],
}

fn write_file(path: &Path, body: String) -> Result<(), ExperimentsError> {
    std::fs::write(path, body)
        .map_err(|source| ExperimentsError::Io { path: path.display().to_string(), source })
}

fn ngram_cell(range: (usize, usize)) -> String {
    format!("{}-{}", range.0, range.1)
}

/// Writes the report files: runs.csv, timings.csv, top10.csv,
/// comparison.csv, contingency_{n1,n2}_{counts,rownorm}.csv, curves.csv.
pub fn emit_report(inputs: &ReportInputs<'_>, out_dir: &Path) -> Result<(), ExperimentsError> {
    if inputs.records.is_empty() {
        return Err(ExperimentsError::EmptyRecords);
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|source| ExperimentsError::Io { path: out_dir.display().to_string(), source })?;

    let mut runs = String::from("config_id,n_gram_range,nr_topics,min_topic_size,repetition,seed,k,nc,nd,ws\n");
    let mut timings = String::from("config_id,repetition,wall_secs\n");
    for r in inputs.records {
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            r.config_id,
            ngram_cell(r.n_gram_range),
            r.nr_topics,
            r.min_topic_size,
            r.repetition,
            r.seed,
            r.k,
            r.nc,
            r.nd,
            r.ws
        );
        let _ = writeln!(timings, "{},{},{:.3}", r.config_id, r.repetition, r.wall_secs);
    }
    write_file(&out_dir.join("runs.csv"), runs)?;
    write_file(&out_dir.join("timings.csv"), timings)?;

    let mut top10 = String::from(
        "config_id,n_gram_range,nr_topics,min_topic_size,runs_ok,partial,mean_k,mean_nc,mean_nd,mean_ws\n",
    );
    for a in inputs.aggregates.iter().take(10) {
        let _ = writeln!(
            top10,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            a.config_id,
            ngram_cell(a.n_gram_range),
            a.nr_topics,
            a.min_topic_size,
            a.runs_ok,
            a.partial,
            a.mean_k,
            a.mean_nc,
            a.mean_nd,
            a.mean_ws
        );
    }
    write_file(&out_dir.join("top10.csv"), top10)?;

    let mut comparison = String::from("metric,unsup,semisup,diff,delta_pct\n");
    for (metric, unsup, semi) in inputs.comparison {
        let diff = semi - unsup;
        let delta = if *unsup == 0.0 {
            String::new()
        } else {
            format!("{:+.1}", diff / unsup * 100.0)
        };
        let _ = writeln!(comparison, "{metric},{unsup:.4},{semi:.4},{diff:+.4},{delta}");
    }
    write_file(&out_dir.join("comparison.csv"), comparison)?;

    for (level, scores) in [
        ("n1", inputs.evaluation.map(|e| &e.n1)),
        ("n2", inputs.evaluation.map(|e| &e.n2)),
    ] {
        let counts_path = out_dir.join(format!("contingency_{level}_counts.csv"));
        let rownorm_path = out_dir.join(format!("contingency_{level}_rownorm.csv"));
        match scores {
            Some(s) => {
                s.contingency.write_counts_csv(&counts_path)?;
                s.contingency.write_row_normalized_csv(&rownorm_path)?;
            }
            None => {
                write_file(&counts_path, "topic\n".to_string())?;
                write_file(&rownorm_path, "topic\n".to_string())?;
            }
        }
    }

    write_curves_csv(&out_dir.join("curves.csv"), inputs.curves)?;
    Ok(())
}

/// Writes `model,nr_topics,mean_ws,std_ws` rows; also usable on its own when
/// a comparison sweep is the only output.
pub fn write_curves_csv(path: &Path, curves: &[CurvePoint]) -> Result<(), ExperimentsError> {
    let mut body = String::from("model,nr_topics,mean_ws,std_ws\n");
    for point in curves {
        let _ = writeln!(
            body,
            "{},{},{:.6},{:.6}",
            point.model, point.nr_topics, point.mean_ws, point.std_ws
        );
    }
    write_file(path, body)
}
