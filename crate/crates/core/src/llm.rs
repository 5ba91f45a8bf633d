//! Gold-standard document labeling and topic naming through a chat-style
//! HTTP endpoint.
//!
//! The module never lets free text escape: every label is validated against
//! the taxonomy (or becomes `no_match`), and topic names are length-checked
//! with a deterministic fallback. Responses are cached per (model, document)
//! so reruns are free.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;
use crate::embeddings::cache_key;
use crate::httpc;
use crate::taxonomy::{fold, Taxonomy};
use crate::topics::TopicRepresentation;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("labeling {doc_id} failed: {message}")]
    Transport { doc_id: String, message: String },
    #[error("topic naming request failed: {0}")]
    NamingTransport(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad label file: {0}")]
    Format(String),
}

/// Which request/response shape the endpoint speaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChatContract {
    /// `{model, prompt, temperature, options}` in, `{response}` out.
    Prompt,
    /// `{model, messages, temperature, options}` in, message content out.
    Messages,
}

#[derive(Clone, Debug)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub context_tokens: u32,
    pub truncate_chars: usize,
    pub retries: u32,
    pub timeout_secs: u64,
    pub in_flight: usize,
    pub cache_dir: Option<PathBuf>,
    pub contract: ChatContract,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        LlmConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.2,
            context_tokens: 2048,
            truncate_chars: 1500,
            retries: 2,
            timeout_secs: 60,
            in_flight: 1,
            cache_dir: None,
            contract: ChatContract::Prompt,
        }
    }
}

/// One side of a parsed label response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelMatch {
    Match(String),
    NoMatch,
}

impl LabelMatch {
    pub fn as_option(&self) -> Option<&str> {
        match self {
            LabelMatch::Match(s) => Some(s),
            LabelMatch::NoMatch => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabelResult {
    pub doc_id: String,
    pub n1: LabelMatch,
    pub n2: LabelMatch,
    pub raw_response: String,
}

/// A label row as persisted to CSV; `None` encodes `no_match`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredLabel {
    pub doc_id: String,
    pub n1: Option<String>,
    pub n2: Option<String>,
}

pub fn response_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collapse runs of whitespace and cut to at most `max_chars` characters,
/// preferring the last space before the limit. Operating on chars keeps
/// multi-byte sequences intact; collapsing first means no line of the
/// document can imitate an option-list entry.
fn truncate_for_prompt(text: &str, max_chars: usize) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().count() <= max_chars {
        return collapsed;
    }
    let prefix: String = collapsed.chars().take(max_chars).collect();
    match prefix.rfind(' ') {
        Some(pos) => prefix[..pos].to_string(),
        None => prefix,
    }
}

pub fn build_label_prompt(text: &str, taxonomy: &Taxonomy, config: &LlmConfig) -> String {
    let mut prompt = String::from(
        "Classifique o texto abaixo usando a taxonomia de dois níveis a seguir.\n\n",
    );
    prompt.push_str("Nível 1:\n");
    for option in taxonomy.n1_options() {
        prompt.push_str("- ");
        prompt.push_str(option);
        prompt.push('\n');
    }
    prompt.push_str("\nNível 2:\n");
    for option in taxonomy.n2_options() {
        prompt.push_str("- ");
        prompt.push_str(option);
        prompt.push('\n');
    }
    prompt.push_str("\nTEXTO: ");
    prompt.push_str(&truncate_for_prompt(text, config.truncate_chars));
    prompt.push_str(
        "\n\nRESPONDA APENAS com o termo exato de cada nível, no formato: <nível 1>, <nível 2>",
    );
    prompt
}

/// Match one response fragment against an option list: exact first, then
/// case/accent-folded, then a folded substring scan that must hit exactly
/// one option.
fn match_side<'a>(
    fragment: &str,
    canonical: impl Fn(&str) -> Option<&'a str>,
    options: &[&'a str],
) -> LabelMatch {
    let trimmed = fragment.trim();
    if trimmed.is_empty() {
        return LabelMatch::NoMatch;
    }
    if let Some(hit) = canonical(trimmed) {
        return LabelMatch::Match(hit.to_string());
    }
    let folded = fold(trimmed);
    let hits: Vec<&str> =
        options.iter().filter(|o| folded.contains(&fold(o))).copied().collect();
    if hits.len() == 1 {
        LabelMatch::Match(hits[0].to_string())
    } else {
        LabelMatch::NoMatch
    }
}

/// Split a raw response on the first comma and validate each side against
/// its level. Without a comma both levels are searched in the whole text.
pub fn parse_label_response(response: &str, taxonomy: &Taxonomy) -> (LabelMatch, LabelMatch) {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return (LabelMatch::NoMatch, LabelMatch::NoMatch);
    }
    let (left, right) = match trimmed.find(',') {
        Some(pos) => (&trimmed[..pos], &trimmed[pos + 1..]),
        None => (trimmed, trimmed),
    };
    let n1 = match_side(left, |s| taxonomy.canonical_n1(s), &taxonomy.n1_options());
    let n2 = match_side(right, |s| taxonomy.canonical_n2(s), &taxonomy.n2_options());
    (n1, n2)
}

fn request_payload(config: &LlmConfig, prompt: &str) -> Value {
    match config.contract {
        ChatContract::Prompt => json!({
            "model": config.model,
            "prompt": prompt,
            "temperature": config.temperature,
            "options": { "context_tokens": config.context_tokens },
        }),
        ChatContract::Messages => json!({
            "model": config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": config.temperature,
            "options": { "context_tokens": config.context_tokens },
        }),
    }
}

fn extract_text(contract: ChatContract, value: &Value) -> Result<String, String> {
    let text = match contract {
        ChatContract::Prompt => value.get("response").and_then(Value::as_str),
        ChatContract::Messages => value
            .pointer("/message/content")
            .or_else(|| value.pointer("/choices/0/message/content"))
            .and_then(Value::as_str),
    };
    text.map(str::to_string).ok_or_else(|| format!("no completion text in {value}"))
}

fn cache_path(config: &LlmConfig, text: &str) -> Option<PathBuf> {
    let dir = config.cache_dir.as_ref()?;
    Some(dir.join(&config.model).join(cache_key(&config.model, text)))
}

fn cache_read(config: &LlmConfig, text: &str) -> Option<String> {
    std::fs::read_to_string(cache_path(config, text)?).ok()
}

fn cache_write(config: &LlmConfig, text: &str, response: &str) {
    let Some(path) = cache_path(config, text) else { return };
    if let Some(parent) = path.parent() {
        if std::fs::create_dir_all(parent).is_err() {
            return;
        }
    }
    let _ = std::fs::write(path, response);
}

fn complete(
    agent: &ureq::Agent,
    config: &LlmConfig,
    prompt: &str,
) -> Result<String, String> {
    let payload = request_payload(config, prompt);
    let value = httpc::post_json(agent, &config.endpoint, &payload, config.retries)?;
    extract_text(config.contract, &value)
}

fn fetch_label_response(
    agent: &ureq::Agent,
    config: &LlmConfig,
    doc: &Document,
    taxonomy: &Taxonomy,
) -> Result<String, LlmError> {
    let prompt = build_label_prompt(&doc.raw_text, taxonomy, config);
    complete(agent, config, &prompt)
        .map_err(|message| LlmError::Transport { doc_id: doc.id.clone(), message })
}

fn result_from_response(doc_id: &str, response: String, taxonomy: &Taxonomy) -> LabelResult {
    let (n1, n2) = parse_label_response(&response, taxonomy);
    LabelResult { doc_id: doc_id.to_string(), n1, n2, raw_response: response }
}

pub fn label_document(
    doc: &Document,
    taxonomy: &Taxonomy,
    config: &LlmConfig,
) -> Result<LabelResult, LlmError> {
    if let Some(cached) = cache_read(config, &doc.raw_text) {
        return Ok(result_from_response(&doc.id, cached, taxonomy));
    }
    let agent = httpc::build_agent(config.timeout_secs);
    let response = fetch_label_response(&agent, config, doc, taxonomy)?;
    cache_write(config, &doc.raw_text, &response);
    Ok(result_from_response(&doc.id, response, taxonomy))
}

/// Label a batch with bounded in-flight requests. Cache reads and writes stay
/// on this thread; only network fetches fan out. Results come back in input
/// order.
pub fn label_documents(
    docs: &[Document],
    taxonomy: &Taxonomy,
    config: &LlmConfig,
) -> Result<Vec<LabelResult>, LlmError> {
    let mut responses: Vec<Option<String>> = Vec::with_capacity(docs.len());
    let mut misses: Vec<usize> = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        let hit = cache_read(config, &doc.raw_text);
        if hit.is_none() {
            misses.push(i);
        }
        responses.push(hit);
    }

    if !misses.is_empty() {
        let agent = httpc::build_agent(config.timeout_secs);
        let fetched: Mutex<Vec<Option<Result<String, LlmError>>>> =
            Mutex::new((0..misses.len()).map(|_| None).collect());
        let cursor = AtomicUsize::new(0);
        let workers = config.in_flight.max(1).min(misses.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = cursor.fetch_add(1, Ordering::SeqCst);
                    if slot >= misses.len() {
                        break;
                    }
                    let doc = &docs[misses[slot]];
                    let outcome = fetch_label_response(&agent, config, doc, taxonomy);
                    fetched.lock().unwrap()[slot] = Some(outcome);
                });
            }
        });
        let fetched = fetched.into_inner().unwrap();
        for (slot, outcome) in misses.iter().zip(fetched) {
            let response = outcome.expect("worker filled every slot")?;
            cache_write(config, &docs[*slot].raw_text, &response);
            responses[*slot] = Some(response);
        }
    }

    Ok(docs
        .iter()
        .zip(responses)
        .map(|(doc, response)| {
            result_from_response(&doc.id, response.expect("all responses resolved"), taxonomy)
        })
        .collect())
}

fn label_cell(label: &LabelMatch) -> &str {
    match label {
        LabelMatch::Match(s) => s,
        LabelMatch::NoMatch => "no_match",
    }
}

pub fn write_labels_csv(path: &Path, results: &[LabelResult]) -> Result<(), LlmError> {
    let io_err = |source| LlmError::Io { path: path.display().to_string(), source };
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => LlmError::Format(format!("{other:?}")),
    })?;
    let as_format = |e: csv::Error| LlmError::Format(e.to_string());
    writer
        .write_record(["doc_id", "n1", "n2", "raw_response_hash"])
        .map_err(as_format)?;
    for result in results {
        let hash = response_hash(&result.raw_response);
        writer
            .write_record([
                result.doc_id.as_str(),
                label_cell(&result.n1),
                label_cell(&result.n2),
                hash.as_str(),
            ])
            .map_err(as_format)?;
    }
    writer.flush().map_err(|source| io_err(source))?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<StoredLabel>, LlmError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => LlmError::Io { path: path.display().to_string(), source },
        other => LlmError::Format(format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| LlmError::Format(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LlmError::Format(format!("missing column {name}")))
    };
    let (id_col, n1_col, n2_col) = (column("doc_id")?, column("n1")?, column("n2")?);
    let cell = |record: &csv::StringRecord, col: usize| -> Option<String> {
        let value = record.get(col).unwrap_or("");
        if value == "no_match" {
            None
        } else {
            Some(value.to_string())
        }
    };
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LlmError::Format(e.to_string()))?;
        labels.push(StoredLabel {
            doc_id: record.get(id_col).unwrap_or("").to_string(),
            n1: cell(&record, n1_col),
            n2: cell(&record, n2_col),
        });
    }
    Ok(labels)
}

fn valid_topic_label(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    let words = trimmed.split_whitespace().count();
    if (1..=3).contains(&words) {
        Some(trimmed.to_string())
    } else {
        None
    }
}

fn build_naming_prompt(pending: &[&TopicRepresentation]) -> String {
    let mut prompt = String::from(
        "Dê a cada tópico abaixo um rótulo claro de até três palavras, \
         com base nas suas palavras mais representativas.\n\n",
    );
    for topic in pending {
        let words: Vec<&str> = topic.top_words.iter().map(|(w, _)| w.as_str()).collect();
        prompt.push_str(&format!("Tópico {}: {}\n", topic.topic_id, words.join(", ")));
    }
    prompt.push_str(
        "\nRESPONDA APENAS com um dicionário JSON que mapeia o ID de cada tópico \
         para o seu rótulo.",
    );
    prompt
}

fn parse_naming_response(response: &str) -> BTreeMap<i32, String> {
    let mut labels = BTreeMap::new();
    let (Some(start), Some(end)) = (response.find('{'), response.rfind('}')) else {
        return labels;
    };
    if end < start {
        return labels;
    }
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&response[start..=end]) else {
        return labels;
    };
    for (key, value) in map {
        let (Ok(id), Some(text)) = (key.trim().parse::<i32>(), value.as_str()) else {
            continue;
        };
        if let Some(label) = valid_topic_label(text) {
            labels.insert(id, label);
        }
    }
    labels
}

/// Name every topic: −1 is always "Outliers" (no request), the rest are
/// asked for in a single JSON-mapping call. Topics whose labels are missing
/// or overlong after one retry keep their auto-generated names.
pub fn name_topics(
    topics: &[TopicRepresentation],
    config: &LlmConfig,
) -> Result<BTreeMap<i32, String>, LlmError> {
    let mut names = BTreeMap::new();
    let mut pending: Vec<&TopicRepresentation> = Vec::new();
    for topic in topics {
        if topic.topic_id == -1 {
            names.insert(-1, "Outliers".to_string());
        } else {
            pending.push(topic);
        }
    }
    if pending.is_empty() {
        return Ok(names);
    }

    let agent = httpc::build_agent(config.timeout_secs);
    let prompt = build_naming_prompt(&pending);
    let wanted: Vec<i32> = pending.iter().map(|t| t.topic_id).collect();
    let mut labels = BTreeMap::new();
    for _attempt in 0..2 {
        let response =
            complete(&agent, config, &prompt).map_err(LlmError::NamingTransport)?;
        labels = parse_naming_response(&response);
        if wanted.iter().all(|id| labels.contains_key(id)) {
            break;
        }
    }
    for topic in pending {
        let name = labels
            .remove(&topic.topic_id)
            .unwrap_or_else(|| topic.name.clone());
        names.insert(topic.topic_id, name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use proptest::prelude::*;

    fn fixture_taxonomy() -> Taxonomy {
        let mut map = indexmap::IndexMap::new();
        map.insert("Saneamento".to_string(), vec!["Saneamento Básico Urbano".to_string()]);
        map.insert(
            "Turismo e Lazer".to_string(),
            vec!["Turismo".to_string(), "Lazer".to_string()],
        );
        Taxonomy::new(map).unwrap()
    }

    fn config() -> LlmConfig {
        LlmConfig::new("http://127.0.0.1:1/api", "teste")
    }

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.to_string(),
            raw_text: text.to_string(),
            process: String::new(),
            declared_category: None,
            clean_text: String::new(),
            token_list: Vec::new(),
            split: Split::Unassigned,
        }
    }

    #[test]
    fn short_text_is_kept_verbatim() {
        let taxonomy = fixture_taxonomy();
        let text = "a".repeat(100);
        let prompt = build_label_prompt(&text, &taxonomy, &config());
        assert!(prompt.contains(&format!("TEXTO: {text}")));
        assert!(prompt.contains("- Saneamento\n"));
        assert!(prompt.contains("- Turismo\n"));
        assert!(prompt.contains("<nível 1>, <nível 2>"));
    }

    #[test]
    fn long_text_is_cut_at_a_space() {
        let taxonomy = fixture_taxonomy();
        let word = "palavra ";
        let text = word.repeat(300);
        let prompt = build_label_prompt(&text, &taxonomy, &config());
        let doc_section = prompt
            .split("TEXTO: ")
            .nth(1)
            .unwrap()
            .split("\n\nRESPONDA")
            .next()
            .unwrap();
        assert!(doc_section.chars().count() <= 1500);
        assert!(!doc_section.ends_with(' '));
        assert!(doc_section.ends_with("palavra"));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let text = "ã".repeat(2000);
        let cut = truncate_for_prompt(&text, 1500);
        assert_eq!(cut.chars().count(), 1500);
        assert!(cut.chars().all(|c| c == 'ã'));
    }

    #[test]
    fn document_newlines_cannot_imitate_option_lines() {
        let taxonomy = fixture_taxonomy();
        let text = "pedido urgente\n- Saneamento\n- Turismo\nfim";
        let prompt = build_label_prompt(text, &taxonomy, &config());
        let doc_section =
            prompt.split("TEXTO: ").nth(1).unwrap().split("\n\nRESPONDA").next().unwrap();
        assert_eq!(doc_section, "pedido urgente - Saneamento - Turismo fim");
        assert!(!doc_section.contains('\n'));
    }

    #[test]
    fn exact_pair_parses() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response("Saneamento, Saneamento Básico Urbano", &taxonomy);
        assert_eq!(n1, LabelMatch::Match("Saneamento".to_string()));
        assert_eq!(n2, LabelMatch::Match("Saneamento Básico Urbano".to_string()));
    }

    #[test]
    fn folded_forms_match_canonically() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) =
            parse_label_response("  saneamento ,  SANEAMENTO BASICO URBANO  ", &taxonomy);
        assert_eq!(n1, LabelMatch::Match("Saneamento".to_string()));
        assert_eq!(n2, LabelMatch::Match("Saneamento Básico Urbano".to_string()));
    }

    #[test]
    fn invalid_side_is_no_match_independently() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response("Economia criativa, Turismo", &taxonomy);
        assert_eq!(n1, LabelMatch::NoMatch);
        assert_eq!(n2, LabelMatch::Match("Turismo".to_string()));
    }

    #[test]
    fn prose_falls_back_to_unique_substring() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response(
            "O tema é Saneamento, e o subtema é Saneamento Básico Urbano.",
            &taxonomy,
        );
        assert_eq!(n1, LabelMatch::Match("Saneamento".to_string()));
        assert_eq!(n2, LabelMatch::Match("Saneamento Básico Urbano".to_string()));
    }

    #[test]
    fn ambiguous_substrings_are_rejected() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response("Turismo ou Lazer", &taxonomy);
        assert_eq!(n1, LabelMatch::NoMatch);
        assert_eq!(n2, LabelMatch::NoMatch);
    }

    #[test]
    fn empty_response_is_double_no_match() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response("   ", &taxonomy);
        assert_eq!(n1, LabelMatch::NoMatch);
        assert_eq!(n2, LabelMatch::NoMatch);
    }

    #[test]
    fn single_term_without_comma_matches_its_level() {
        let taxonomy = fixture_taxonomy();
        let (n1, n2) = parse_label_response("Saneamento", &taxonomy);
        assert_eq!(n1, LabelMatch::Match("Saneamento".to_string()));
        assert_eq!(n2, LabelMatch::NoMatch);
    }

    #[test]
    fn request_payload_shapes() {
        let mut cfg = config();
        let payload = request_payload(&cfg, "pergunta");
        assert_eq!(payload["model"], "teste");
        assert_eq!(payload["prompt"], "pergunta");
        assert_eq!(payload["temperature"], 0.2);
        assert_eq!(payload["options"]["context_tokens"], 2048);

        cfg.contract = ChatContract::Messages;
        let payload = request_payload(&cfg, "pergunta");
        assert_eq!(payload["messages"][0]["role"], "user");
        assert_eq!(payload["messages"][0]["content"], "pergunta");

        let prompt_reply = serde_json::json!({ "response": "ok" });
        assert_eq!(extract_text(ChatContract::Prompt, &prompt_reply).unwrap(), "ok");
        let chat_reply = serde_json::json!({ "message": { "content": "oi" } });
        assert_eq!(extract_text(ChatContract::Messages, &chat_reply).unwrap(), "oi");
        let openai_reply =
            serde_json::json!({ "choices": [{ "message": { "content": "olá" } }] });
        assert_eq!(extract_text(ChatContract::Messages, &openai_reply).unwrap(), "olá");
        assert!(extract_text(ChatContract::Prompt, &chat_reply).is_err());
    }

    #[test]
    fn cached_documents_skip_the_network() {
        let taxonomy = fixture_taxonomy();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config();
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let document = doc("d1", "reclamação sobre esgoto a céu aberto");

        let path = cache_path(&cfg, &document.raw_text).unwrap();
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, "Saneamento, Saneamento Básico Urbano").unwrap();

        // The endpoint port is closed, so any network attempt would error.
        let result = label_document(&document, &taxonomy, &cfg).unwrap();
        assert_eq!(result.n1, LabelMatch::Match("Saneamento".to_string()));
        assert_eq!(result.n2, LabelMatch::Match("Saneamento Básico Urbano".to_string()));

        let batch = label_documents(&[document], &taxonomy, &cfg).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].doc_id, "d1");
    }

    #[test]
    fn transport_error_names_the_document() {
        let taxonomy = fixture_taxonomy();
        let mut cfg = config();
        cfg.retries = 0;
        let err = label_document(&doc("d9", "texto"), &taxonomy, &cfg).unwrap_err();
        match err {
            LlmError::Transport { doc_id, .. } => assert_eq!(doc_id, "d9"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn labels_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let results = vec![
            LabelResult {
                doc_id: "a".to_string(),
                n1: LabelMatch::Match("Saneamento".to_string()),
                n2: LabelMatch::NoMatch,
                raw_response: "Saneamento, perdi o resto".to_string(),
            },
            LabelResult {
                doc_id: "b".to_string(),
                n1: LabelMatch::NoMatch,
                n2: LabelMatch::Match("Turismo".to_string()),
                raw_response: "??, Turismo".to_string(),
            },
        ];
        write_labels_csv(&path, &results).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("doc_id,n1,n2,raw_response_hash\n"));
        assert!(text.contains("a,Saneamento,no_match,"));
        let hash = response_hash("Saneamento, perdi o resto");
        assert_eq!(hash.len(), 64);
        assert!(text.contains(&hash));

        let stored = read_labels_csv(&path).unwrap();
        assert_eq!(stored.len(), 2);
        assert_eq!(stored[0].n1.as_deref(), Some("Saneamento"));
        assert_eq!(stored[0].n2, None);
        assert_eq!(stored[1].n1, None);
        assert_eq!(stored[1].n2.as_deref(), Some("Turismo"));
    }

    #[test]
    fn naming_handles_outliers_and_empty_lists_offline() {
        let names = name_topics(&[], &config()).unwrap();
        assert!(names.is_empty());

        let outlier = TopicRepresentation {
            topic_id: -1,
            size: 3,
            top_words: vec![],
            name: "-1_outliers".to_string(),
            llm_label: None,
        };
        let names = name_topics(&[outlier], &config()).unwrap();
        assert_eq!(names.len(), 1);
        assert_eq!(names[&-1], "Outliers");
    }

    #[test]
    fn naming_response_parsing_is_strict() {
        let parsed = parse_naming_response(
            "Claro! Aqui está:\n{\"0\": \"Esgoto urbano\", \"3\": \"Praias\", \
             \"5\": \"um rótulo comprido demais aqui\", \"x\": \"ruim\"}\nEspero ter ajudado.",
        );
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[&0], "Esgoto urbano");
        assert_eq!(parsed[&3], "Praias");
        assert!(parse_naming_response("sem json nenhum").is_empty());
        assert!(parse_naming_response("} invertido {").is_empty());
    }

    #[test]
    fn valid_labels_are_one_to_three_words() {
        assert_eq!(valid_topic_label("  Esgoto  "), Some("Esgoto".to_string()));
        assert_eq!(valid_topic_label("Coleta de lixo"), Some("Coleta de lixo".to_string()));
        assert_eq!(valid_topic_label("um dois três quatro"), None);
        assert_eq!(valid_topic_label("   "), None);
    }

    proptest! {
        #[test]
        fn parsed_labels_always_satisfy_membership(response in ".{0,60}") {
            let taxonomy = fixture_taxonomy();
            let (n1, n2) = parse_label_response(&response, &taxonomy);
            if let LabelMatch::Match(value) = n1 {
                prop_assert!(taxonomy.n1_options().contains(&value.as_str()));
            }
            if let LabelMatch::Match(value) = n2 {
                prop_assert!(taxonomy.n2_options().contains(&value.as_str()));
            }
        }

        #[test]
        fn truncation_never_exceeds_the_budget(text in "[a-zã ]{0,400}", limit in 10usize..120) {
            let cut = truncate_for_prompt(&text, limit);
            prop_assert!(cut.chars().count() <= limit);
            let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert!(collapsed.starts_with(&cut));
        }
    }
}
