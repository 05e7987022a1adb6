//! Tokenization, vocabulary construction, and pre-trained embedding loading.
//!
//! The tokenizer does Penn-Treebank-style word splitting (contractions split
//! off, punctuation separated) with one extra rule: anonymization placeholders
//! such as `@PERSON1` survive as single tokens with their case intact. All
//! other tokens are lowercased, matching the casing of the common public
//! embedding files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::EssayRecord;

#[derive(Debug, Error)]
pub enum TextPrepError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding file line {line}: cannot parse value '{value}'")]
    BadValue { line: usize, value: String },
    #[error("min_count must be at least 1")]
    BadMinCount,
    #[error("embedding dimension must be positive")]
    BadDimension,
}

/// Reserved index for the padding token.
pub const PAD_INDEX: usize = 0;
/// Reserved index for out-of-vocabulary tokens.
pub const UNK_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Tokens of one essay, in text order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub essay_id: u64,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Alternatives, leftmost-first: placeholder, ellipsis, word (internal
        // apostrophes/hyphens kept for the contraction pass below), bare
        // contraction suffix, any other single non-space character.
        Regex::new(
            r"(?x)
            @\w+
            | \.\.\.
            | [A-Za-z0-9]+(?:['\x{2019}-][A-Za-z0-9]+)*
            | '(?:s|m|d|re|ve|ll)\b
            | \S
            ",
        )
        .expect("valid token regex")
    })
}

/// Split a word the way the Treebank rules do: `can't` becomes `ca` + `n't`,
/// `John's` becomes `john` + `'s`. Single pass; one suffix per word.
fn split_contraction(word: &str) -> (String, Option<String>) {
    let lower = word.to_lowercase();
    if lower.len() > 3 && lower.ends_with("n't") {
        let cut = lower.len() - 3;
        return (lower[..cut].to_string(), Some("n't".to_string()));
    }
    for suffix in ["'s", "'m", "'d", "'re", "'ve", "'ll"] {
        if lower.len() > suffix.len() && lower.ends_with(suffix) {
            let cut = lower.len() - suffix.len();
            return (lower[..cut].to_string(), Some(suffix.to_string()));
        }
    }
    (lower, None)
}

/// Tokenize one essay. Deterministic; empty text yields an empty sequence.
pub fn tokenize(essay_id: u64, text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for m in token_regex().find_iter(text) {
        let raw = m.as_str();
        if raw.starts_with('@') && raw.len() > 1 {
            tokens.push(raw.to_string());
            continue;
        }
        if raw.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            let (stem, suffix) = split_contraction(raw);
            if !stem.is_empty() {
                tokens.push(stem);
            }
            if let Some(suffix) = suffix {
                tokens.push(suffix);
            }
        } else {
            tokens.push(raw.to_lowercase());
        }
    }
    TokenSequence { essay_id, tokens }
}

pub fn tokenize_record(record: &EssayRecord) -> TokenSequence {
    tokenize(record.essay_id, &record.text)
}

/// Token-to-index map with reserved padding and unknown entries at indices
/// 0 and 1. Construction order is deterministic: descending frequency,
/// lexicographic on ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Index of `token`, or the unknown index when absent.
    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, sequence: &TokenSequence) -> Vec<usize> {
        sequence.tokens.iter().map(|t| self.get(t)).collect()
    }

    /// Stable digest of the token list, recorded in checkpoints so a model
    /// is never resumed against a different vocabulary.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update([0]);
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Build a vocabulary over every token occurring at least `min_count` times.
pub fn build_vocab(
    sequences: &[TokenSequence],
    min_count: u64,
) -> Result<Vocabulary, TextPrepError> {
    if min_count < 1 {
        return Err(TextPrepError::BadMinCount);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for sequence in sequences {
        for token in &sequence.tokens {
            if token == PAD_TOKEN || token == UNK_TOKEN {
                continue;
            }
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = Vec::with_capacity(kept.len() + 2);
    tokens.push(PAD_TOKEN.to_string());
    tokens.push(UNK_TOKEN.to_string());
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from_tokens(tokens))
}

/// Dense embedding table, one row per vocabulary index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub matrix: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn vocab_size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Which vocabulary entries the embedding file did not define, plus the
/// file's full lexicon so per-prompt coverage can be measured afterwards.
#[derive(Debug, Clone)]
pub struct OovReport {
    pub matched: usize,
    pub missing: Vec<String>,
    pub file_lexicon: HashSet<String>,
}

impl OovReport {
    /// Count, per prompt, the distinct tokens that the embedding file does
    /// not define. Placeholders and misspellings both land here.
    pub fn per_prompt_oov(
        &self,
        sequences: &[(u32, &TokenSequence)],
    ) -> BTreeMap<u32, usize> {
        let mut undefined: BTreeMap<u32, HashSet<&str>> = BTreeMap::new();
        for (prompt_id, sequence) in sequences {
            let entry = undefined.entry(*prompt_id).or_default();
            for token in &sequence.tokens {
                if !self.file_lexicon.contains(token.as_str()) {
                    entry.insert(token);
                }
            }
        }
        undefined.into_iter().map(|(p, s)| (p, s.len())).collect()
    }
}

/// Load a plain-text embedding file (`token v1 v2 ... vd` per line) against
/// a vocabulary. In-vocabulary tokens get the file's vectors; padding,
/// unknown, and out-of-vocabulary rows stay zero so they are inert under
/// sum pooling.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<(EmbeddingMatrix, OovReport), TextPrepError> {
    if dim == 0 {
        return Err(TextPrepError::BadDimension);
    }
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TextPrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut matrix = Array2::<f64>::zeros((vocab.len(), dim));
    let mut defined: HashSet<usize> = HashSet::new();
    let mut file_lexicon = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TextPrepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default().to_string();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(TextPrepError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        if vocab.contains(&token) {
            let row = vocab.get(&token);
            if row != PAD_INDEX && row != UNK_INDEX {
                for (j, value) in values.iter().enumerate() {
                    matrix[[row, j]] =
                        value.parse().map_err(|_| TextPrepError::BadValue {
                            line: line_no,
                            value: value.to_string(),
                        })?;
                }
                defined.insert(row);
            }
        }
        file_lexicon.insert(token);
    }

    let missing = vocab
        .tokens()
        .iter()
        .enumerate()
        .skip(2)
        .filter(|(i, _)| !defined.contains(i))
        .map(|(_, t)| t.clone())
        .collect();
    Ok((
        EmbeddingMatrix { matrix },
        OovReport {
            matched: defined.len(),
            missing,
            file_lexicon,
        },
    ))
}
