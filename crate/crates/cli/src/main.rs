//! Command-line frontend: each subcommand wires one stage of the pipeline
//! (prep -> embed -> fit -> transform/eval) or one of the experiment
//! protocols (grid, compare, label, name-topics) to files on disk.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use civitopic::clustering::{read_assignment_csv, write_assignment_csv};
use civitopic::corpus::{self, Corpus, CorpusFormat, Document, PreprocessConfig};
use civitopic::embeddings::{EmbedClient, EmbedConfig, EmbeddingMatrix};
use civitopic::experiments::{self, GridSpec, ReportInputs};
use civitopic::llm::{self, ChatContract, LabelMatch, LlmConfig};
use civitopic::metrics;
use civitopic::pipeline::{self, Guidance, Mode, PipelineConfig};
use civitopic::taxonomy::Taxonomy;
use civitopic::topics::NrTopics;

#[derive(Parser)]
#[command(name = "civitopic", version, about = "Seed-guided topic modeling over civic text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, deduplicate and filter a raw corpus
    Prep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        /// Directory for corpus.csv and removals.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Fetch embeddings for a corpus or for taxonomy seed phrases
    Embed {
        /// Corpus whose `text` column gets embedded
        #[arg(long, conflicts_with = "taxonomy")]
        corpus: Option<PathBuf>,
        /// csv or jsonl
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Taxonomy whose seed phrases get embedded instead of a corpus
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Embedding service URL
        #[arg(long)]
        endpoint: String,
        /// Model name sent with every request
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[arg(long, default_value_t = 2)]
        retries: u32,
        /// Parallel requests in flight
        #[arg(long, default_value_t = 1)]
        in_flight: usize,
        /// Cache directory for per-text vectors
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Output matrix; a .bin extension selects the binary format
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a topic model and write the bundle
    Fit {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        /// Document embedding matrix covering the corpus ids
        #[arg(long)]
        embeddings: PathBuf,
        /// Pipeline configuration JSON; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode in the configuration
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        guidance: GuidanceArgs,
        /// Run directory for the model bundle, split.csv and scores.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign documents with a fitted model
    Transform {
        /// Run directory written by fit
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Embeddings covering the corpus ids, same provider as the fit
        #[arg(long)]
        embeddings: PathBuf,
        /// Output assignment CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the hyperparameter grid and write the report
    Grid {
        /// Grid JSON; the standard sweep applies when omitted
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Template configuration shared by every cell
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        guidance: GuidanceArgs,
        /// Worker threads; 0 uses the available parallelism
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Report directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare embedding models across topic counts (unsupervised fits)
    Compare {
        /// name=path pairs, comma separated
        #[arg(long)]
        embeddings: String,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Topic counts to sweep, comma separated; "auto" is allowed
        #[arg(long)]
        nr_topics: Option<String>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Directory for curves.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Label documents against the taxonomy with an LLM
    Label {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        taxonomy: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
        /// Characters of document text kept in the prompt
        #[arg(long, default_value_t = 1500)]
        truncate_chars: usize,
        #[arg(long, default_value_t = 2048)]
        context_tokens: u32,
        /// Parallel requests in flight
        #[arg(long, default_value_t = 1)]
        in_flight: usize,
        /// Cache directory for raw responses
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Output labels CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask an LLM for short topic names
    NameTopics {
        /// Run directory written by fit
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
        /// Output JSON map of topic id to name
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fitted run against stored labels
    Eval {
        /// Run directory written by fit
        #[arg(long)]
        run: PathBuf,
        /// Labels CSV written by label
        #[arg(long)]
        labels: PathBuf,
        /// Prepared corpus; adds internal scores to the report
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// csv or jsonl
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Report directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file with id and text columns
    #[arg(long)]
    corpus: PathBuf,
    /// csv or jsonl
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        load_corpus(&self.corpus, self.format)
    }
}

#[derive(Args)]
struct PreprocessArgs {
    /// Stopword list, one word per line
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Lemma lexicon, one tab-separated surface/lemma pair per line
    #[arg(long)]
    lemmas: Option<PathBuf>,
    /// Drop documents whose cleaned text is shorter than this
    #[arg(long, default_value_t = 0)]
    min_chars: usize,
}

impl PreprocessArgs {
    fn load(&self) -> Result<PreprocessConfig> {
        PreprocessConfig::load(self.stopwords.as_deref(), self.lemmas.as_deref(), self.min_chars)
            .context("loading preprocessing resources")
    }
}

#[derive(Args)]
struct GuidanceArgs {
    /// Taxonomy JSON mapping each N1 domain to its N2 subcategories
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Embeddings of the taxonomy seed phrases, keyed by phrase text
    #[arg(long)]
    seed_embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct LlmArgs {
    /// Chat service URL; credentials come from CIVITOPIC_API_KEY
    #[arg(long)]
    endpoint: String,
    /// Model name sent with every request
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Request/response shape the endpoint speaks
    #[arg(long, value_enum, default_value_t = ContractArg::Prompt)]
    contract: ContractArg,
}

impl LlmArgs {
    fn config(&self) -> LlmConfig {
        let mut config = LlmConfig::new(&self.endpoint, &self.model);
        config.temperature = self.temperature;
        config.retries = self.retries;
        config.timeout_secs = self.timeout;
        config.contract = self.contract.into();
        config
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Unsup,
    Semi,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContractArg {
    Prompt,
    Messages,
}

impl From<FormatArg> for CorpusFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Csv => CorpusFormat::Csv,
            FormatArg::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Unsup => Mode::Unsupervised,
            ModeArg::Semi => Mode::Semisupervised,
        }
    }
}

impl From<ContractArg> for ChatContract {
    fn from(arg: ContractArg) -> Self {
        match arg {
            ContractArg::Prompt => ChatContract::Prompt,
            ContractArg::Messages => ChatContract::Messages,
        }
    }
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", render_error(&err));
            std::process::ExitCode::FAILURE
        }
    }
}

/// Joins the cause chain, skipping causes the library errors already spell
/// out in their own messages.
fn render_error(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep { corpus, preprocess, out } => cmd_prep(&corpus, &preprocess, &out),
        Command::Embed {
            corpus,
            format,
            taxonomy,
            endpoint,
            model,
            batch_size,
            timeout,
            retries,
            in_flight,
            cache_dir,
            out,
        } => {
            let mut config = EmbedConfig::new(endpoint, model);
            config.batch_size = batch_size;
            config.timeout_secs = timeout;
            config.retries = retries;
            config.in_flight = in_flight;
            config.cache_dir = cache_dir;
            cmd_embed(corpus.as_deref(), format, taxonomy.as_deref(), config, &out)
        }
        Command::Fit { corpus, preprocess, embeddings, config, mode, guidance, out } => {
            cmd_fit(&corpus, &preprocess, &embeddings, config.as_deref(), mode, &guidance, &out)
        }
        Command::Transform { run, corpus, embeddings, out } => {
            cmd_transform(&run, &corpus, &embeddings, &out)
        }
        Command::Grid {
            grid,
            corpus,
            preprocess,
            embeddings,
            config,
            mode,
            guidance,
            workers,
            out,
        } => cmd_grid(
            grid.as_deref(),
            &corpus,
            &preprocess,
            &embeddings,
            config.as_deref(),
            mode,
            &guidance,
            workers,
            &out,
        ),
        Command::Compare {
            embeddings,
            corpus,
            preprocess,
            config,
            nr_topics,
            repetitions,
            workers,
            out,
        } => cmd_compare(
            &embeddings,
            &corpus,
            &preprocess,
            config.as_deref(),
            nr_topics.as_deref(),
            repetitions,
            workers,
            &out,
        ),
        Command::Label {
            corpus,
            taxonomy,
            llm,
            truncate_chars,
            context_tokens,
            in_flight,
            cache_dir,
            out,
        } => {
            let mut config = llm.config();
            config.truncate_chars = truncate_chars;
            config.context_tokens = context_tokens;
            config.in_flight = in_flight;
            config.cache_dir = cache_dir;
            cmd_label(&corpus, &taxonomy, config, &out)
        }
        Command::NameTopics { run, llm, out } => cmd_name_topics(&run, llm.config(), &out),
        Command::Eval { run, labels, corpus, format, out } => {
            cmd_eval(&run, &labels, corpus.as_deref(), format, &out)
        }
    }
}

fn cmd_prep(corpus: &CorpusArgs, preprocess: &PreprocessArgs, out: &Path) -> Result<()> {
    let raw = corpus.load()?;
    let total = raw.len();
    let (kept, removals) = prepare(&raw, &preprocess.load()?);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    corpus::write_corpus_csv(&out.join("corpus.csv"), &kept)?;
    corpus::write_removal_report(&out.join("removals.csv"), &removals)?;
    println!(
        "prep: kept {} of {total} documents ({} removed) -> {}",
        kept.len(),
        removals.len(),
        out.display()
    );
    Ok(())
}

fn cmd_embed(
    corpus: Option<&Path>,
    format: FormatArg,
    taxonomy: Option<&Path>,
    config: EmbedConfig,
    out: &Path,
) -> Result<()> {
    let (ids, texts): (Vec<String>, Vec<String>) = match (corpus, taxonomy) {
        (Some(path), None) => {
            let corpus = load_corpus(path, format)?;
            corpus.documents.into_iter().map(|d| (d.id, d.raw_text)).unzip()
        }
        (None, Some(path)) => {
            let taxonomy = Taxonomy::load(path)?;
            let mut phrases: Vec<String> = Vec::new();
            for (_, list) in taxonomy.seed_phrase_lists() {
                for phrase in list {
                    if !phrases.contains(&phrase) {
                        phrases.push(phrase);
                    }
                }
            }
            (phrases.clone(), phrases)
        }
        _ => bail!("pass exactly one of --corpus or --taxonomy"),
    };
    let matrix = EmbedClient::new(config).fetch_embeddings(&ids, &texts)?;
    save_matrix(&matrix, out)?;
    println!("embed: {} texts, {} dimensions -> {}", matrix.len(), matrix.dimension(), out.display());
    Ok(())
}

fn cmd_fit(
    corpus: &CorpusArgs,
    preprocess: &PreprocessArgs,
    embeddings: &Path,
    config: Option<&Path>,
    mode: Option<ModeArg>,
    guidance: &GuidanceArgs,
    out: &Path,
) -> Result<()> {
    let config = load_config(config, mode)?;
    let preprocess = preprocess.load()?;
    let prepared = prepare(&corpus.load()?, &preprocess).0;
    let split = corpus::split(&prepared, config.train_fraction, config.seed)?;
    let train: Vec<Document> = split.train_documents().cloned().collect();
    let train_ids: Vec<String> = train.iter().map(|d| d.id.clone()).collect();
    let matrix = EmbeddingMatrix::load(embeddings)?.subset(&train_ids)?;
    let guidance = load_guidance(guidance, config.mode, &preprocess, config.seed_multiplier)?;

    let outcome = pipeline::fit(&train, &matrix, &config, guidance.as_ref())?;
    pipeline::save_bundle(&outcome, &train_ids, out)?;
    corpus::write_split_csv(&out.join("split.csv"), &split)?;
    let tokens: Vec<Vec<String>> = train.iter().map(|d| d.token_list.clone()).collect();
    let scores = metrics::internal_scores(&outcome.model.representations, &tokens)?;
    write_json(&out.join("scores.json"), &scores)?;
    println!(
        "fit: {} train documents, k={}, nc={:.5}, nd={:.5}, ws={:.5} -> {}",
        train.len(),
        outcome.model.k(),
        scores.nc,
        scores.nd,
        scores.ws,
        out.display()
    );
    Ok(())
}

fn cmd_transform(run: &Path, corpus: &CorpusArgs, embeddings: &Path, out: &Path) -> Result<()> {
    let model = pipeline::load_bundle(run)?;
    let corpus = corpus.load()?;
    let ids: Vec<String> = corpus.documents.iter().map(|d| d.id.clone()).collect();
    let matrix = EmbeddingMatrix::load(embeddings)?.subset(&ids)?;
    let assignment = pipeline::transform(&model, &corpus.documents, &matrix)?;
    write_assignment_csv(out, &ids, &assignment)?;
    let outliers = assignment.labels.iter().filter(|&&l| l == -1).count();
    println!("transform: {} documents, {outliers} outliers -> {}", ids.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_grid(
    grid: Option<&Path>,
    corpus: &CorpusArgs,
    preprocess: &PreprocessArgs,
    embeddings: &Path,
    config: Option<&Path>,
    mode: Option<ModeArg>,
    guidance: &GuidanceArgs,
    workers: usize,
    out: &Path,
) -> Result<()> {
    let grid = match grid {
        Some(path) => read_json::<GridSpec>(path)?,
        None => GridSpec::standard(),
    };
    let template = load_config(config, mode)?;
    let preprocess = preprocess.load()?;
    let prepared = prepare(&corpus.load()?, &preprocess).0;
    let matrix = EmbeddingMatrix::load(embeddings)?;
    let guidance = load_guidance(guidance, template.mode, &preprocess, template.seed_multiplier)?;

    let outcome =
        experiments::run_grid(&prepared, &matrix, &grid, &template, guidance.as_ref(), workers)?;
    let inputs = ReportInputs {
        records: &outcome.records,
        aggregates: &outcome.aggregates,
        comparison: &[],
        evaluation: None,
        curves: &[],
    };
    experiments::emit_report(&inputs, out)?;
    if !outcome.failures.is_empty() {
        let mut body = String::from("config_id,repetition,message\n");
        for f in &outcome.failures {
            let _ = writeln!(body, "{},{},{}", f.config_id, f.repetition, csv_quote(&f.message));
        }
        let path = out.join("failures.csv");
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("grid: {} runs failed, see failures.csv", outcome.failures.len());
    }
    println!(
        "grid: {} cells, {} runs ok, {} failed -> {}",
        outcome.aggregates.len(),
        outcome.records.len(),
        outcome.failures.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    embeddings: &str,
    corpus: &CorpusArgs,
    preprocess: &PreprocessArgs,
    config: Option<&Path>,
    nr_topics: Option<&str>,
    repetitions: usize,
    workers: usize,
    out: &Path,
) -> Result<()> {
    let mut models = Vec::new();
    for pair in embeddings.split(',') {
        let (name, path) = pair
            .split_once('=')
            .with_context(|| format!("`{pair}` is not a name=path pair"))?;
        let matrix = EmbeddingMatrix::load(Path::new(path))
            .with_context(|| format!("loading embeddings `{name}`"))?;
        models.push((name.to_string(), matrix));
    }
    let sweep = match nr_topics {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<NrTopics>().map_err(anyhow::Error::msg))
            .collect::<Result<Vec<_>>>()?,
        None => GridSpec::standard().nr_topics_values,
    };
    let mut template = load_config(config, None)?;
    template.mode = Mode::Unsupervised;
    let prepared = prepare(&corpus.load()?, &preprocess.load()?).0;

    let curves = experiments::compare_embedding_models(
        &prepared,
        &models,
        &sweep,
        &template,
        repetitions,
        workers,
    )?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    experiments::write_curves_csv(&out.join("curves.csv"), &curves)?;
    println!(
        "compare: {} models, {} sweep points -> {}",
        models.len(),
        sweep.len(),
        out.display()
    );
    Ok(())
}

fn cmd_label(corpus: &CorpusArgs, taxonomy: &Path, config: LlmConfig, out: &Path) -> Result<()> {
    let corpus = corpus.load()?;
    let taxonomy = Taxonomy::load(taxonomy)?;
    let results = llm::label_documents(&corpus.documents, &taxonomy, &config)?;
    llm::write_labels_csv(out, &results)?;
    let matched = |side: fn(&llm::LabelResult) -> &LabelMatch| {
        results.iter().filter(|r| matches!(side(r), LabelMatch::Match(_))).count()
    };
    println!(
        "label: {} documents, {} N1 matches, {} N2 matches -> {}",
        results.len(),
        matched(|r| &r.n1),
        matched(|r| &r.n2),
        out.display()
    );
    Ok(())
}

fn cmd_name_topics(run: &Path, config: LlmConfig, out: &Path) -> Result<()> {
    let model = pipeline::load_bundle(run)?;
    let names = llm::name_topics(&model.representations, &config)?;
    write_json(out, &names)?;
    println!("name-topics: {} topics named -> {}", names.len(), out.display());
    Ok(())
}

fn cmd_eval(
    run: &Path,
    labels: &Path,
    corpus: Option<&Path>,
    format: FormatArg,
    out: &Path,
) -> Result<()> {
    let (ids, assignment) = read_assignment_csv(&run.join("clusters.csv"))?;
    let labels = llm::read_labels_csv(labels)?;
    let evaluation = experiments::evaluate_external(&ids, &assignment, &labels)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for scores in [&evaluation.n1, &evaluation.n2] {
        let level = scores.level;
        scores
            .contingency
            .write_counts_csv(&out.join(format!("contingency_{level}_counts.csv")))?;
        scores
            .contingency
            .write_row_normalized_csv(&out.join(format!("contingency_{level}_rownorm.csv")))?;
    }

    let excluded = evaluation.exclusions;
    let mut report = serde_json::json!({
        "n1": { "ari": evaluation.n1.ari, "nmi": evaluation.n1.nmi },
        "n2": { "ari": evaluation.n2.ari, "nmi": evaluation.n2.nmi },
        "excluded": {
            "outliers": excluded.outliers,
            "unlabeled": excluded.unlabeled,
            "no_match_n1": excluded.no_match_n1,
            "no_match_n2": excluded.no_match_n2,
        },
    });
    if let Some(path) = corpus {
        let model = pipeline::load_bundle(run)?;
        let corpus = load_corpus(path, format)?;
        let by_id: HashMap<&str, &Document> =
            corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        let tokens: Vec<Vec<String>> = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|d| tokens_for(d))
                    .with_context(|| format!("document `{id}` from the run is not in the corpus"))
            })
            .collect::<Result<_>>()?;
        let scores = metrics::internal_scores(&model.representations, &tokens)?;
        report["internal"] =
            serde_json::json!({ "nc": scores.nc, "nd": scores.nd, "ws": scores.ws });
    }
    write_json(&out.join("eval.json"), &report)?;
    println!(
        "eval: n1 ari={:.4} nmi={:.4}, n2 ari={:.4} nmi={:.4} -> {}",
        evaluation.n1.ari,
        evaluation.n1.nmi,
        evaluation.n2.ari,
        evaluation.n2.nmi,
        out.display()
    );
    Ok(())
}

fn load_corpus(path: &Path, format: FormatArg) -> Result<Corpus> {
    corpus::load_corpus(path, format.into())
        .with_context(|| format!("loading {}", path.display()))
}

/// Drops duplicates and empty documents, then cleans and tokenizes. Documents
/// that clean down to nothing are reported as empty too. Running it again
/// over an already prepared corpus changes nothing, so fit and grid accept
/// raw and prepared input alike.
fn prepare(raw: &Corpus, config: &PreprocessConfig) -> (Corpus, Vec<corpus::Removal>) {
    let (deduped, mut removals) = corpus::dedupe_and_filter(raw);
    let processed = corpus::preprocess(&deduped, config);
    let kept: std::collections::HashSet<&str> =
        processed.documents.iter().map(|d| d.id.as_str()).collect();
    for doc in &deduped.documents {
        if !kept.contains(doc.id.as_str()) {
            removals
                .push(corpus::Removal { id: doc.id.clone(), reason: corpus::RemovalReason::Empty });
        }
    }
    (processed, removals)
}

fn load_config(path: Option<&Path>, mode: Option<ModeArg>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(path) => read_json::<PipelineConfig>(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = mode {
        config.mode = mode.into();
    }
    Ok(config)
}

fn load_guidance(
    args: &GuidanceArgs,
    mode: Mode,
    preprocess: &PreprocessConfig,
    seed_multiplier: f64,
) -> Result<Option<Guidance>> {
    match (mode, &args.taxonomy, &args.seed_embeddings) {
        (Mode::Semisupervised, Some(taxonomy), Some(phrases)) => {
            let taxonomy = Taxonomy::load(taxonomy)?;
            let phrases = EmbeddingMatrix::load(phrases)?;
            let guidance =
                Guidance::from_taxonomy(&taxonomy, &phrases, preprocess, seed_multiplier)?;
            Ok(Some(guidance))
        }
        (Mode::Semisupervised, _, _) => {
            bail!("semi-supervised mode needs both --taxonomy and --seed-embeddings")
        }
        (Mode::Unsupervised, None, None) => Ok(None),
        (Mode::Unsupervised, _, _) => {
            bail!("--taxonomy and --seed-embeddings only apply in semi-supervised mode")
        }
    }
}

fn tokens_for(doc: &Document) -> Vec<String> {
    if doc.token_list.is_empty() {
        doc.raw_text.split_whitespace().map(str::to_string).collect()
    } else {
        doc.token_list.clone()
    }
}

fn save_matrix(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        matrix.save_binary(path)?;
    } else {
        matrix.save_text(path)?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}
