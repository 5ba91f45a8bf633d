//! Shared plumbing for integration tests: a local HTTP stub that stands in
//! for the embedding and chat providers, and synthetic blob corpora.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use civitopic::corpus::{Corpus, Document, Split};
use civitopic::embeddings::EmbeddingMatrix;
use civitopic::DenseMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct StubResponse {
    pub status: u16,
    pub body: String,
}

impl StubResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        StubResponse { status: 200, body: body.into() }
    }

    pub fn error(status: u16) -> Self {
        StubResponse { status, body: String::new() }
    }
}

/// Minimal single-threaded HTTP/1.1 server. Every request body is recorded;
/// the responder sees the request index and the parsed JSON body. Responses
/// close the connection, so clients reconnect per request.
pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<String>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(responder: F) -> Self
    where
        F: Fn(usize, &serde_json::Value) -> StubResponse + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = {
            let requests = Arc::clone(&requests);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                let mut served = 0usize;
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(mut stream) = stream else { break };
                    let Some(body) = read_request(&mut stream) else { continue };
                    let parsed = serde_json::from_str(&body)
                        .unwrap_or(serde_json::Value::Null);
                    requests.lock().unwrap().push(body);
                    let response = responder(served, &parsed);
                    served += 1;
                    write_response(&mut stream, &response);
                }
            })
        };
        StubServer { addr, requests, shutdown, handle: Some(handle) }
    }

    /// Always replies 200 with the same JSON body.
    pub fn fixed(body: impl Into<String>) -> Self {
        let body = body.into();
        Self::start(move |_, _| StubResponse::ok(body.clone()))
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn raw_requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }

    pub fn json_requests(&self) -> Vec<serde_json::Value> {
        self.raw_requests()
            .iter()
            .map(|body| serde_json::from_str(body).expect("request body is json"))
            .collect()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn read_request(stream: &mut TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    if request_line.trim().is_empty() {
        return None;
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end().to_ascii_lowercase();
        if header.is_empty() {
            break;
        }
        if let Some(value) = header.strip_prefix("content-length:") {
            content_length = value.trim().parse().ok()?;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

fn write_response(stream: &mut TcpStream, response: &StubResponse) {
    let reason = match response.status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let text = format!(
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        response.body.len(),
        response.body
    );
    let _ = stream.write_all(text.as_bytes());
}

pub fn gauss(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn named_categories(raw: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
    raw.iter()
        .map(|(name, words)| {
            (name.to_string(), words.iter().map(|w| w.to_string()).collect())
        })
        .collect()
}

/// Unit-scale anchor direction for category `c`: two hot dimensions, so
/// anchors never collide as long as `2 * categories <= dim`.
pub fn anchor(c: usize, dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; dim];
    row[2 * c] = 1.0;
    row[2 * c + 1] = 0.5;
    row
}

/// Category blobs: every document gets tokens drawn from its category's
/// vocabulary and an embedding near the category's anchor direction.
pub fn blob_corpus(
    categories: &[(String, Vec<String>)],
    per_blob: usize,
    dim: usize,
    noise: f64,
    tokens_per_doc: usize,
    seed: u64,
    provider: &str,
) -> (Corpus, EmbeddingMatrix) {
    assert!(2 * categories.len() <= dim, "anchor dims would collide");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut rows = Vec::new();
    for i in 0..per_blob {
        for (c, (name, words)) in categories.iter().enumerate() {
            let tokens: Vec<String> = (0..tokens_per_doc)
                .map(|_| words[rng.random_range(0..words.len())].clone())
                .collect();
            docs.push(Document {
                id: format!("{name}-{i}"),
                raw_text: tokens.join(" "),
                process: String::new(),
                declared_category: Some(name.clone()),
                clean_text: tokens.join(" "),
                token_list: tokens,
                split: Split::Unassigned,
            });
            let mut row = anchor(c, dim);
            for value in &mut row {
                *value += noise * gauss(&mut rng);
            }
            rows.push(row);
        }
    }
    let ids = docs.iter().map(|d| d.id.clone()).collect();
    let matrix =
        EmbeddingMatrix::new(ids, DenseMatrix::from_rows(&rows), provider).unwrap();
    (Corpus::new(docs), matrix)
}

