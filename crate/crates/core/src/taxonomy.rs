//! The two-level category taxonomy: loading, validation, canonical matching,
//! and derivation of seed material for the semi-supervised mode.
//!
//! The on-disk shape is a JSON object mapping each level-1 domain to its list
//! of level-2 terms, in file order. Residual entries (names starting with
//! "outros") are real categories for labeling but never become seeds.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::{preprocess_text, PreprocessConfig};
use crate::topics::ngrams;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed taxonomy {path}: {message}")]
    Parse { path: String, message: String },
    #[error("taxonomy has no level-1 entries")]
    Empty,
    #[error("blank term under `{0}`")]
    BlankTerm(String),
    #[error("term `{0}` contains a comma, which the response parser reserves")]
    CommaInTerm(String),
    #[error("level-1 names `{0}` and `{1}` collide after normalization")]
    DuplicateN1(String, String),
    #[error("level-2 term `{0}` appears more than once across the taxonomy")]
    DuplicateN2(String),
}

/// Lowercases, strips Latin diacritics, and collapses whitespace. All option
/// matching goes through this so LLM responses differing only in case or
/// accents still resolve.
pub(crate) fn fold(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_whitespace() {
            out.push(' ');
            continue;
        }
        for lower in ch.to_lowercase() {
            out.push(match lower {
                'á' | 'à' | 'â' | 'ã' | 'ä' => 'a',
                'é' | 'è' | 'ê' | 'ë' => 'e',
                'í' | 'ì' | 'î' | 'ï' => 'i',
                'ó' | 'ò' | 'ô' | 'õ' | 'ö' => 'o',
                'ú' | 'ù' | 'û' | 'ü' => 'u',
                'ç' => 'c',
                other => other,
            });
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_residual(name: &str) -> bool {
    fold(name).starts_with("outros")
}

/// Validated two-level taxonomy with canonical lookups.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    map: IndexMap<String, Vec<String>>,
    n1_by_fold: HashMap<String, usize>,
    n2_by_fold: HashMap<String, (usize, usize)>,
}

impl Taxonomy {
    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TaxonomyError::Io { path: path.display().to_string(), source })?;
        let map: IndexMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| TaxonomyError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Self::new(map)
    }

    pub fn new(map: IndexMap<String, Vec<String>>) -> Result<Self, TaxonomyError> {
        if map.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut n1_by_fold = HashMap::new();
        let mut n2_by_fold = HashMap::new();
        for (i, (n1, n2_list)) in map.iter().enumerate() {
            validate_term(n1, n1)?;
            if let Some(&prev) = n1_by_fold.get(&fold(n1)) {
                let (other, _) = map.get_index(prev).unwrap();
                return Err(TaxonomyError::DuplicateN1(other.clone(), n1.clone()));
            }
            n1_by_fold.insert(fold(n1), i);
            for (j, n2) in n2_list.iter().enumerate() {
                validate_term(n2, n1)?;
                if n2_by_fold.insert(fold(n2), (i, j)).is_some() {
                    return Err(TaxonomyError::DuplicateN2(n2.clone()));
                }
            }
        }
        Ok(Self { map, n1_by_fold, n2_by_fold })
    }

    pub fn n1_options(&self) -> Vec<&str> {
        self.map.keys().map(String::as_str).collect()
    }

    pub fn n2_options(&self) -> Vec<&str> {
        self.map.values().flatten().map(String::as_str).collect()
    }

    pub fn n2_of(&self, n1: &str) -> Option<&[String]> {
        self.map.get(n1).map(Vec::as_slice)
    }

    /// Level-1 parent of a canonical level-2 term.
    pub fn parent_of(&self, n2: &str) -> Option<&str> {
        let &(i, _) = self.n2_by_fold.get(&fold(n2))?;
        self.map.get_index(i).map(|(k, _)| k.as_str())
    }

    /// Resolves `input` to a canonical level-1 name: exact first, then
    /// case/accent-insensitive.
    pub fn canonical_n1(&self, input: &str) -> Option<&str> {
        let trimmed = input.trim();
        if self.map.contains_key(trimmed) {
            return self.map.get_key_value(trimmed).map(|(k, _)| k.as_str());
        }
        let &i = self.n1_by_fold.get(&fold(trimmed))?;
        self.map.get_index(i).map(|(k, _)| k.as_str())
    }

    /// Resolves `input` to a canonical level-2 name, like [`canonical_n1`].
    ///
    /// [`canonical_n1`]: Taxonomy::canonical_n1
    pub fn canonical_n2(&self, input: &str) -> Option<&str> {
        let trimmed = input.trim();
        let &(i, j) = self.n2_by_fold.get(&fold(trimmed))?;
        let term = &self.map.get_index(i).unwrap().1[j];
        if term == trimmed || fold(term) == fold(trimmed) {
            Some(term.as_str())
        } else {
            None
        }
    }

    /// One seed list per non-residual level-1 domain: the domain name itself
    /// plus up to five of its non-residual level-2 terms, in file order.
    pub fn seed_phrase_lists(&self) -> Vec<(String, Vec<String>)> {
        self.map
            .iter()
            .filter(|(n1, _)| !is_residual(n1))
            .map(|(n1, n2_list)| {
                let mut phrases = vec![n1.clone()];
                phrases.extend(
                    n2_list.iter().filter(|n2| !is_residual(n2)).take(5).cloned(),
                );
                (n1.clone(), phrases)
            })
            .collect()
    }

    /// Flattens every seed phrase into boost terms: preprocessed unigrams plus
    /// adjacent bigrams, matching what the vectorizer can produce.
    pub fn seed_boost_terms(&self, config: &PreprocessConfig) -> BTreeSet<String> {
        let mut terms = BTreeSet::new();
        for (_, phrases) in self.seed_phrase_lists() {
            for phrase in phrases {
                let (_, tokens) = preprocess_text(&phrase, config);
                terms.extend(ngrams(&tokens, (1, 2)));
            }
        }
        terms
    }
}

fn validate_term(term: &str, context: &str) -> Result<(), TaxonomyError> {
    if term.trim().is_empty() {
        return Err(TaxonomyError::BlankTerm(context.to_string()));
    }
    if term.contains(',') {
        return Err(TaxonomyError::CommaInTerm(term.to_string()));
    }
    Ok(())
}
