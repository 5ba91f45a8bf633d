//! Topic-quality and partition-agreement metrics.
//!
//! Internal quality is scored from document co-occurrence of each topic's top
//! words (NC), vocabulary spread across topics (ND), and their 0.8/0.2 blend
//! (WS). External agreement against reference labels uses ARI and NMI plus
//! contingency matrices. The outlier topic never participates.

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topics::TopicRepresentation;

const EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no topics to score")]
    NoTopics,
    #[error("topic {0} has fewer than 2 top words")]
    TopicTooSmall(i32),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 labeled items, got {0}")]
    TooFewItems(usize),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Pointwise mutual information of two terms over documents, normalized to
/// [-1, 1]. Counts are document frequencies: `n_i` documents contain term i,
/// `n_ij` contain both, out of `n_docs`.
///
/// The branches keep the boundary cases exact: disjoint terms are -1 even
/// when one term never occurs at all, and terms whose containing documents
/// coincide are +1 regardless of how rare they are.
pub fn npmi(n_i: usize, n_j: usize, n_ij: usize, n_docs: usize) -> f64 {
    if n_ij == 0 {
        return -1.0;
    }
    if n_i == n_ij && n_j == n_ij {
        return 1.0;
    }
    let n = n_docs as f64;
    let p_ij = n_ij as f64 / n;
    let p_i = n_i as f64 / n;
    let p_j = n_j as f64 / n;
    let pmi = ((p_ij + EPS) / (p_i * p_j + EPS)).ln();
    pmi / -(p_ij + EPS).ln()
}

/// True when `tokens` contains `term` as a contiguous run; multi-word terms
/// are matched as token windows, mirroring the vectorizer's n-grams.
fn contains_term(tokens: &[String], term: &[&str]) -> bool {
    if term.len() == 1 {
        return tokens.iter().any(|t| t == term[0]);
    }
    tokens.windows(term.len()).any(|w| w.iter().zip(term).all(|(a, b)| a == b))
}

fn doc_bitset(corpus: &[Vec<String>], term: &str) -> (Vec<u64>, usize) {
    let parts: Vec<&str> = term.split(' ').collect();
    let mut blocks = vec![0u64; corpus.len().div_ceil(64)];
    let mut count = 0;
    for (d, tokens) in corpus.iter().enumerate() {
        if contains_term(tokens, &parts) {
            blocks[d / 64] |= 1 << (d % 64);
            count += 1;
        }
    }
    (blocks, count)
}

/// Normalized coherence: mean over topics of the mean pairwise NPMI of the
/// topic's ten strongest words, measured by document co-occurrence in
/// `corpus` and mapped to [0, 1]. Outlier rows are ignored; a topic with
/// fewer than two top words is an error.
pub fn coherence_nc(
    topics: &[TopicRepresentation],
    corpus: &[Vec<String>],
) -> Result<f64, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let real: Vec<&TopicRepresentation> = topics.iter().filter(|t| t.topic_id >= 0).collect();
    if real.is_empty() {
        return Err(MetricsError::NoTopics);
    }

    let mut cache: HashMap<&str, (Vec<u64>, usize)> = HashMap::new();
    let mut topic_means = Vec::with_capacity(real.len());
    for topic in real {
        let words: Vec<&str> = topic.top_words.iter().take(10).map(|(t, _)| t.as_str()).collect();
        if words.len() < 2 {
            return Err(MetricsError::TopicTooSmall(topic.topic_id));
        }
        for &word in &words {
            cache.entry(word).or_insert_with(|| doc_bitset(corpus, word));
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for a in 0..words.len() {
            for b in (a + 1)..words.len() {
                let (blocks_a, n_a) = &cache[words[a]];
                let (blocks_b, n_b) = &cache[words[b]];
                let n_ab: u32 =
                    blocks_a.iter().zip(blocks_b).map(|(x, y)| (x & y).count_ones()).sum();
                let value = npmi(*n_a, *n_b, n_ab as usize, corpus.len());
                sum += (value + 1.0) / 2.0;
                pairs += 1;
            }
        }
        topic_means.push(sum / pairs as f64);
    }
    Ok(topic_means.iter().sum::<f64>() / topic_means.len() as f64)
}

/// Normalized diversity: distinct words across all top-ten lists divided by
/// ten words per topic. Outlier rows are ignored.
pub fn diversity_nd(topics: &[TopicRepresentation]) -> Result<f64, MetricsError> {
    let real: Vec<&TopicRepresentation> = topics.iter().filter(|t| t.topic_id >= 0).collect();
    if real.is_empty() {
        return Err(MetricsError::NoTopics);
    }
    let mut unique = std::collections::HashSet::new();
    for topic in &real {
        for (term, _) in topic.top_words.iter().take(10) {
            unique.insert(term.as_str());
        }
    }
    Ok(unique.len() as f64 / (10.0 * real.len() as f64))
}

/// WS = 0.8 NC + 0.2 ND. Inputs must already be normalized.
pub fn weighted_score(nc: f64, nd: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&nc) {
        return Err(MetricsError::OutOfRange { name: "nc", value: nc });
    }
    if !(0.0..=1.0).contains(&nd) {
        return Err(MetricsError::OutOfRange { name: "nd", value: nd });
    }
    Ok(0.8 * nc + 0.2 * nd)
}

/// The three internal scores together.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InternalScores {
    pub nc: f64,
    pub nd: f64,
    pub ws: f64,
}

pub fn internal_scores(
    topics: &[TopicRepresentation],
    corpus: &[Vec<String>],
) -> Result<InternalScores, MetricsError> {
    let nc = coherence_nc(topics, corpus)?;
    let nd = diversity_nd(topics)?;
    let ws = weighted_score(nc, nd)?;
    Ok(InternalScores { nc, nd, ws })
}

fn check_pair_lengths<A, B>(a: &[A], b: &[B]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewItems(a.len()));
    }
    Ok(())
}

/// Adjusted Rand index between two partitions of the same items. The
/// combinatorics run in exact integer arithmetic; only the final quotient is
/// floating point. Degenerate agreement (both partitions trivial in the same
/// way) is 1.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64, MetricsError>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    check_pair_lengths(a, b)?;
    let n = a.len();
    let mut joint: HashMap<(usize, usize), i128> = HashMap::new();
    let mut row_ids: HashMap<&A, usize> = HashMap::new();
    let mut col_ids: HashMap<&B, usize> = HashMap::new();
    let mut row_sums: Vec<i128> = Vec::new();
    let mut col_sums: Vec<i128> = Vec::new();
    for (x, y) in a.iter().zip(b) {
        let next_row = row_ids.len();
        let i = *row_ids.entry(x).or_insert(next_row);
        if i == row_sums.len() {
            row_sums.push(0);
        }
        let next_col = col_ids.len();
        let j = *col_ids.entry(y).or_insert(next_col);
        if j == col_sums.len() {
            col_sums.push(0);
        }
        row_sums[i] += 1;
        col_sums[j] += 1;
        *joint.entry((i, j)).or_insert(0) += 1;
    }
    let choose2 = |x: i128| x * (x - 1) / 2;
    let index: i128 = joint.values().map(|&c| choose2(c)).sum();
    let sum_a: i128 = row_sums.iter().map(|&c| choose2(c)).sum();
    let sum_b: i128 = col_sums.iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(n as i128);
    let num = 2 * (index * pairs - sum_a * sum_b);
    let den = pairs * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Normalized mutual information with natural logarithms and arithmetic-mean
/// entropy normalization. Two single-cluster partitions agree perfectly (1);
/// a single-cluster partition against anything else carries no information
/// (0).
pub fn normalized_mutual_information<A, B>(a: &[A], b: &[B]) -> Result<f64, MetricsError>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    check_pair_lengths(a, b)?;
    let n = a.len() as f64;
    let mut count_a: HashMap<&A, f64> = HashMap::new();
    let mut count_b: HashMap<&B, f64> = HashMap::new();
    let mut joint: HashMap<(&A, &B), f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *count_a.entry(x).or_insert(0.0) += 1.0;
        *count_b.entry(y).or_insert(0.0) += 1.0;
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
    }
    let entropy = |counts: &[f64]| -> f64 {
        -counts.iter().map(|&c| (c / n) * (c / n).ln()).sum::<f64>()
    };
    let h_a = entropy(&count_a.values().copied().collect::<Vec<_>>());
    let h_b = entropy(&count_b.values().copied().collect::<Vec<_>>());
    if h_a == 0.0 && h_b == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for ((x, y), &c) in &joint {
        mi += (c / n) * ((n * c) / (count_a[x] * count_b[y])).ln();
    }
    Ok(mi / ((h_a + h_b) / 2.0))
}

/// Cross-tabulation of two label sequences, with ids sorted for stable output.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn contingency<A, B>(a: &[A], b: &[B]) -> Result<Contingency, MetricsError>
where
    A: Ord + Hash + Eq + Display,
    B: Ord + Hash + Eq + Display,
{
    check_pair_lengths(a, b)?;
    let rows: Vec<&A> = a.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let cols: Vec<&B> = b.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let row_index: HashMap<&A, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let col_index: HashMap<&B, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
    for (x, y) in a.iter().zip(b) {
        counts[row_index[x]][col_index[y]] += 1;
    }
    Ok(Contingency {
        row_ids: rows.into_iter().map(|r| r.to_string()).collect(),
        col_ids: cols.into_iter().map(|c| c.to_string()).collect(),
        counts,
    })
}

impl Contingency {
    /// Each row rescaled to sum to 1.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
            })
            .collect()
    }

    /// Each column rescaled to sum to 1.
    pub fn col_normalized(&self) -> Vec<Vec<f64>> {
        let mut totals = vec![0u64; self.col_ids.len()];
        for row in &self.counts {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        self.counts
            .iter()
            .map(|row| {
                row.iter().zip(&totals).map(|(&c, &t)| c as f64 / t.max(1) as f64).collect()
            })
            .collect()
    }

    pub fn write_counts_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let body = self.render(|row| self.counts[row].iter().map(u64::to_string).collect());
        std::fs::write(path, body)
            .map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
    }

    pub fn write_row_normalized_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let normalized = self.row_normalized();
        let body = self.render(|row| normalized[row].iter().map(|v| format!("{v:.6}")).collect());
        std::fs::write(path, body)
            .map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
    }

    fn render(&self, cells: impl Fn(usize) -> Vec<String>) -> String {
        let quote = |s: &str| {
            if s.contains(',') || s.contains('"') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::from("topic");
        for col in &self.col_ids {
            out.push(',');
            out.push_str(&quote(col));
        }
        out.push('\n');
        for (r, row_id) in self.row_ids.iter().enumerate() {
            out.push_str(&quote(row_id));
            for cell in cells(r) {
                out.push(',');
                out.push_str(&cell);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rep(topic_id: i32, words: &[&str]) -> TopicRepresentation {
        TopicRepresentation {
            topic_id,
            size: 1,
            top_words: words.iter().map(|w| (w.to_string(), 1.0)).collect(),
            name: String::new(),
            llm_label: None,
        }
    }

    fn docs(lists: &[&[&str]]) -> Vec<Vec<String>> {
        lists.iter().map(|l| l.iter().map(|t| t.to_string()).collect()).collect()
    }

    #[test]
    fn npmi_boundary_branches_are_exact() {
        assert_eq!(npmi(3, 2, 0, 10), -1.0);
        assert_eq!(npmi(0, 0, 0, 10), -1.0);
        assert_eq!(npmi(3, 3, 3, 10), 1.0);
        assert_eq!(npmi(5, 5, 5, 5), 1.0);
        // Independent-looking counts sit strictly inside the interval.
        let mid = npmi(3, 3, 2, 6);
        assert!(mid > -1.0 && mid < 1.0);
    }

    #[test]
    fn perfect_and_disjoint_pairs_hit_the_ends() {
        let corpus = docs(&[&["a", "b"], &["a", "b"], &["c"], &["d"]]);
        let perfect = coherence_nc(&[rep(0, &["a", "b"])], &corpus).unwrap();
        assert_eq!(perfect, 1.0);
        let disjoint = coherence_nc(&[rep(0, &["a", "c"])], &corpus).unwrap();
        assert_eq!(disjoint, 0.0);
    }

    #[test]
    fn six_document_oracle() {
        let corpus = docs(&[&["x", "y"], &["x", "y"], &["x"], &["z"], &["y", "z"], &["w"]]);
        let nc = coherence_nc(&[rep(0, &["x", "y", "z"])], &corpus).unwrap();
        // Counts by hand: n_x = n_y = 3, n_z = 2, n_xy = 2, n_xz = 0, n_yz = 1.
        let xy = (4.0f64 / 3.0).ln() / 3.0f64.ln();
        let yz = 0.0;
        let expected = ((xy + 1.0) / 2.0 + 0.0 + (yz + 1.0) / 2.0) / 3.0;
        assert!((nc - expected).abs() < 1e-9, "{nc} vs {expected}");
    }

    #[test]
    fn bigram_terms_need_contiguous_tokens() {
        let corpus = docs(&[&["coleta", "seletiva", "lixo"], &["seletiva", "coleta"]]);
        let nc =
            coherence_nc(&[rep(0, &["coleta seletiva", "lixo"])], &corpus).unwrap();
        // The bigram occurs only in the first document, where lixo also
        // occurs: subset case, NPMI = 1.
        assert_eq!(nc, 1.0);
    }

    #[test]
    fn absent_words_score_as_never_cooccurring() {
        let corpus = docs(&[&["a"], &["a", "b"]]);
        let nc = coherence_nc(&[rep(0, &["a", "fantasma"])], &corpus).unwrap();
        assert_eq!(nc, 0.0);
    }

    #[test]
    fn coherence_input_validation() {
        let corpus = docs(&[&["a"]]);
        assert!(matches!(coherence_nc(&[], &corpus), Err(MetricsError::NoTopics)));
        assert!(matches!(
            coherence_nc(&[rep(-1, &["a", "b"])], &corpus),
            Err(MetricsError::NoTopics)
        ));
        assert!(matches!(
            coherence_nc(&[rep(0, &["a"])], &corpus),
            Err(MetricsError::TopicTooSmall(0))
        ));
        assert!(matches!(coherence_nc(&[rep(0, &["a", "b"])], &[]), Err(MetricsError::EmptyCorpus)));
    }

    #[test]
    fn coherence_truncates_at_ten_words() {
        let corpus = docs(&[&["a", "b"], &["a", "b"]]);
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let mut topic = rep(0, &["a", "b"]);
        topic.top_words =
            vec![("a".to_string(), 2.0), ("b".to_string(), 1.9)];
        topic.top_words.extend(words.into_iter().map(|w| (w, 0.1)));
        let with_tail = coherence_nc(&[topic], &corpus).unwrap();
        // Only the first ten words count: 1 perfect pair + 17 disjoint pairs
        // among {a, b, w0..w7}.
        let expected = (1.0 + 0.0 * 17.0) / 45.0;
        assert!((with_tail - expected).abs() < 1e-12);
    }

    #[test]
    fn diversity_examples() {
        let shared = vec![rep(0, &["a", "b"]), rep(1, &["a", "b"])];
        assert!((diversity_nd(&shared).unwrap() - 2.0 / 20.0).abs() < 1e-12);
        let disjoint = vec![
            rep(0, &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]),
            rep(1, &["k", "l", "m", "n", "o", "p", "q", "r", "s", "t"]),
        ];
        assert_eq!(diversity_nd(&disjoint).unwrap(), 1.0);
        assert!(matches!(diversity_nd(&[rep(-1, &[])]), Err(MetricsError::NoTopics)));
    }

    #[test]
    fn weighted_score_reproduces_published_rows() {
        assert!((weighted_score(0.11711, 0.86234).unwrap() - 0.26615).abs() < 5e-5);
        assert!((weighted_score(0.0953, 0.8522).unwrap() - 0.2467).abs() < 5e-5);
        assert_eq!(weighted_score(0.0, 0.0).unwrap(), 0.0);
        assert!(weighted_score(-0.1, 0.5).is_err());
        assert!(weighted_score(0.5, 1.2).is_err());
    }

    #[test]
    fn ari_known_values() {
        let a = vec![0, 0, 1, 1];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let same = vec![7, 7, 7, 7];
        let distinct = vec![0, 1, 2, 3];
        assert_eq!(adjusted_rand_index(&same, &distinct).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&distinct, &distinct).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&same, &same).unwrap(), 1.0);

        // Oracle by full pair enumeration for a = [0,0,1,1], b = [0,0,1,2].
        let b = vec![0, 0, 1, 2];
        let (mut agree_same, mut agree_diff, mut disagree) = (0.0, 0.0, 0.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => agree_same += 1.0,
                    (false, false) => agree_diff += 1.0,
                    _ => disagree += 1.0,
                }
            }
        }
        let total = agree_same + agree_diff + disagree;
        let sum_a: f64 = 2.0 * (2.0 - 1.0) / 2.0 * 2.0;
        let sum_b: f64 = 1.0;
        let expected_index = sum_a * sum_b / total;
        let max_index = (sum_a + sum_b) / 2.0;
        let oracle = (agree_same - expected_index) / (max_index - expected_index);
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!((ari - oracle).abs() < 1e-12, "{ari} vs {oracle}");
    }

    #[test]
    fn ari_mixed_types_and_errors() {
        let topics = vec![0, 0, 1];
        let labels = vec!["x".to_string(), "x".to_string(), "y".to_string()];
        assert_eq!(adjusted_rand_index(&topics, &labels).unwrap(), 1.0);
        assert!(matches!(
            adjusted_rand_index(&[0, 1], &["a"]),
            Err(MetricsError::LengthMismatch(2, 1))
        ));
        assert!(matches!(
            adjusted_rand_index::<i32, i32>(&[0], &[0]),
            Err(MetricsError::TooFewItems(1))
        ));
    }

    #[test]
    fn nmi_known_values() {
        let a = vec![0, 0, 1, 1];
        assert!((normalized_mutual_information(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let same = vec![1, 1, 1];
        assert_eq!(normalized_mutual_information(&same, &same).unwrap(), 1.0);
        let multi = vec![0, 1, 2];
        assert_eq!(normalized_mutual_information(&same, &multi).unwrap(), 0.0);
    }

    #[test]
    fn nmi_six_element_hand_oracle() {
        let a = vec![0, 0, 0, 1, 1, 1];
        let b = vec![0, 0, 1, 1, 2, 2];
        // Joint cells: (0,0)=2, (0,1)=1, (1,1)=1, (1,2)=2 over n = 6.
        let n = 6.0f64;
        let h_a = -2.0 * (3.0 / n) * (3.0f64 / n).ln();
        let h_b = -3.0 * (2.0 / n) * (2.0f64 / n).ln();
        let mi = (2.0 / n) * ((n * 2.0) / (3.0 * 2.0)).ln()
            + (1.0 / n) * ((n * 1.0) / (3.0 * 2.0)).ln()
            + (1.0 / n) * ((n * 1.0) / (3.0 * 2.0)).ln()
            + (2.0 / n) * ((n * 2.0) / (3.0 * 2.0)).ln();
        let expected = mi / ((h_a + h_b) / 2.0);
        let nmi = normalized_mutual_information(&a, &b).unwrap();
        assert!((nmi - expected).abs() < 1e-12);
    }

    #[test]
    fn nmi_of_independent_labels_is_near_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let a: Vec<u8> = (0..10_000).map(|_| rng.random::<bool>() as u8).collect();
        let b: Vec<u8> = (0..10_000).map(|_| rng.random::<bool>() as u8).collect();
        let nmi = normalized_mutual_information(&a, &b).unwrap();
        assert!(nmi <= 0.05, "{nmi}");
    }

    #[test]
    fn contingency_counts_and_normalizations() {
        let a = vec![0, 0, 1];
        let b = vec!["x", "x", "y"];
        let c = contingency(&a, &b).unwrap();
        assert_eq!(c.row_ids, vec!["0", "1"]);
        assert_eq!(c.col_ids, vec!["x", "y"]);
        assert_eq!(c.counts, vec![vec![2, 0], vec![0, 1]]);
        for row in c.row_normalized() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let col_norm = c.col_normalized();
        assert_eq!(col_norm[0][0], 1.0);
        let col_totals: Vec<u64> =
            (0..2).map(|j| c.counts.iter().map(|r| r[j]).sum()).collect();
        assert_eq!(col_totals, vec![2, 1]);
    }

    #[test]
    fn contingency_csv_shape() {
        let c = contingency(&[0, 0, 1], &["x", "y", "y"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let counts_path = dir.path().join("counts.csv");
        c.write_counts_csv(&counts_path).unwrap();
        let text = std::fs::read_to_string(&counts_path).unwrap();
        assert_eq!(text, "topic,x,y\n0,1,1\n1,0,1\n");
        let norm_path = dir.path().join("rownorm.csv");
        c.write_row_normalized_csv(&norm_path).unwrap();
        let norm = std::fs::read_to_string(&norm_path).unwrap();
        assert!(norm.starts_with("topic,x,y\n0,0.500000,0.500000\n"));
    }

    fn canonical(labels: &[u8]) -> Vec<usize> {
        let mut map = HashMap::new();
        let mut next = 0usize;
        labels
            .iter()
            .map(|l| {
                *map.entry(*l).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn ari_nmi_are_relabeling_invariant(
            labels in proptest::collection::vec(0u8..4, 4..30),
            other in proptest::collection::vec(0u8..4, 4..30),
        ) {
            let n = labels.len().min(other.len());
            let a = &labels[..n];
            let b = &other[..n];
            let swapped: Vec<u8> = a.iter().map(|&l| 3 - l).collect();
            let ari1 = adjusted_rand_index(&a.to_vec(), &b.to_vec()).unwrap();
            let ari2 = adjusted_rand_index(&swapped, &b.to_vec()).unwrap();
            prop_assert!((ari1 - ari2).abs() < 1e-12);
            let nmi1 = normalized_mutual_information(&a.to_vec(), &b.to_vec()).unwrap();
            let nmi2 = normalized_mutual_information(&swapped, &b.to_vec()).unwrap();
            prop_assert!((nmi1 - nmi2).abs() < 1e-12);
        }

        #[test]
        fn ari_is_one_exactly_on_identical_partitions(
            a in proptest::collection::vec(0u8..3, 2..20),
            b in proptest::collection::vec(0u8..3, 2..20),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            let ari = adjusted_rand_index(&a.to_vec(), &b.to_vec()).unwrap();
            prop_assert!(ari <= 1.0 + 1e-12);
            if canonical(a) == canonical(b) {
                prop_assert!((ari - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(ari < 1.0);
            }
        }

        #[test]
        fn weighted_score_is_linear(nc in 0.0f64..1.0, nd in 0.0f64..1.0, alpha in 0.0f64..1.0) {
            let scaled = weighted_score(alpha * nc, alpha * nd).unwrap();
            let reference = alpha * weighted_score(nc, nd).unwrap();
            prop_assert!((scaled - reference).abs() < 1e-12);
        }
    }
}
