//! Content features: smoothed word distributions and KL divergences between
//! an essay and aggregate distributions of example essays at three score
//! levels.
//!
//! Levels are score bands over the prompt's range. The default banding cuts
//! the range into thirds at `min + w` and `min + 2w` with `w = (max-min)/3`;
//! both cut points belong to the middle band, so a 0-3 range yields the
//! bands {0}, {1,2}, {3}. Tertile-by-count banding is available as an
//! alternative.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EssayRecord, PromptSpec};
use crate::textprep::{TokenSequence, Vocabulary};

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("smoothing constant must be positive, got {0}")]
    BadAlpha(f64),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("no essays to partition")]
    NoEssays,
    #[error("record {essay_id} belongs to prompt {found}, expected {expected}")]
    PromptMismatch {
        essay_id: u64,
        found: u32,
        expected: u32,
    },
    #[error("distribution length mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("reference distribution has non-positive mass at index {0}")]
    NonPositiveReference(usize),
}

/// Additive-smoothed probability distribution over vocabulary indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDistribution {
    probabilities: Vec<f64>,
    pub alpha: f64,
}

impl WordDistribution {
    /// Wrap raw probabilities, for reference distributions built by hand.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        Self {
            probabilities,
            alpha: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Smoothing constant that keeps the added mass independent of vocabulary
/// size: one pseudo-token spread over the whole vocabulary.
pub fn default_alpha(vocab_size: usize) -> f64 {
    1.0 / vocab_size.max(1) as f64
}

fn distribution_from_counts(
    counts: &[u64],
    alpha: f64,
) -> Result<WordDistribution, FeaturesError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(FeaturesError::BadAlpha(alpha));
    }
    if counts.is_empty() {
        return Err(FeaturesError::EmptyVocabulary);
    }
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha * counts.len() as f64;
    let probabilities = counts
        .iter()
        .map(|&c| (c as f64 + alpha) / denom)
        .collect();
    Ok(WordDistribution {
        probabilities,
        alpha,
    })
}

fn count_tokens(tokens: &TokenSequence, vocab: &Vocabulary, counts: &mut [u64]) {
    for token in &tokens.tokens {
        counts[vocab.get(token)] += 1;
    }
}

/// Smoothed word distribution of one essay: p(w) = (count + α) / (len + α·|V|).
/// Tokens outside the vocabulary are tallied under the unknown index.
pub fn word_distribution(
    tokens: &TokenSequence,
    vocab: &Vocabulary,
    alpha: f64,
) -> Result<WordDistribution, FeaturesError> {
    if vocab.is_empty() {
        return Err(FeaturesError::EmptyVocabulary);
    }
    let mut counts = vec![0u64; vocab.len()];
    count_tokens(tokens, vocab, &mut counts);
    distribution_from_counts(&counts, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Banding {
    #[default]
    EqualWidth,
    TertileByCount,
}

/// One score band with its member essays and their aggregate distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBand {
    pub lo: i64,
    pub hi: i64,
    pub essay_ids: BTreeSet<u64>,
    pub distribution: WordDistribution,
}

/// Up to three score levels; `degenerate` marks partitions that collapsed
/// to fewer than three non-empty bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPartition {
    pub levels: Vec<LevelBand>,
    pub degenerate: bool,
}

impl LevelPartition {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

fn equal_width_bands(spec: &PromptSpec) -> [(i64, i64); 3] {
    let min = spec.min_score as f64;
    let width = (spec.max_score - spec.min_score) as f64 / 3.0;
    let cut1 = min + width;
    let cut2 = min + 2.0 * width;
    let band_of = |s: i64| -> usize {
        let v = s as f64;
        if v < cut1 {
            0
        } else if v <= cut2 {
            1
        } else {
            2
        }
    };
    let mut bounds = [(i64::MAX, i64::MIN); 3];
    for s in spec.min_score..=spec.max_score {
        let b = band_of(s);
        bounds[b].0 = bounds[b].0.min(s);
        bounds[b].1 = bounds[b].1.max(s);
    }
    bounds
}

fn tertile_bands(scores: &[i64], spec: &PromptSpec) -> [(i64, i64); 3] {
    let mut sorted = scores.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let cut1 = sorted[(n - 1) / 3];
    let cut2 = sorted[(2 * (n - 1)) / 3].max(cut1);
    [
        (spec.min_score, cut1),
        (cut1 + 1, cut2),
        (cut2 + 1, spec.max_score),
    ]
}

/// Split a prompt's essays into three score levels and build each level's
/// aggregate word distribution from the concatenated token counts. Empty
/// bands are dropped and the partition flagged degenerate.
pub fn partition_levels(
    entries: &[(&EssayRecord, &TokenSequence)],
    spec: &PromptSpec,
    vocab: &Vocabulary,
    alpha: f64,
    banding: Banding,
) -> Result<LevelPartition, FeaturesError> {
    if entries.is_empty() {
        return Err(FeaturesError::NoEssays);
    }
    if vocab.is_empty() {
        return Err(FeaturesError::EmptyVocabulary);
    }
    for (record, _) in entries {
        if record.prompt_id != spec.prompt_id {
            return Err(FeaturesError::PromptMismatch {
                essay_id: record.essay_id,
                found: record.prompt_id,
                expected: spec.prompt_id,
            });
        }
    }
    let bounds = match banding {
        Banding::EqualWidth => equal_width_bands(spec),
        Banding::TertileByCount => {
            let scores: Vec<i64> = entries.iter().map(|(r, _)| r.score).collect();
            tertile_bands(&scores, spec)
        }
    };

    let mut levels = Vec::new();
    for (lo, hi) in bounds {
        if lo > hi {
            continue;
        }
        let mut essay_ids = BTreeSet::new();
        let mut counts = vec![0u64; vocab.len()];
        for (record, tokens) in entries {
            if record.score >= lo && record.score <= hi {
                essay_ids.insert(record.essay_id);
                count_tokens(tokens, vocab, &mut counts);
            }
        }
        if essay_ids.is_empty() {
            continue;
        }
        levels.push(LevelBand {
            lo,
            hi,
            essay_ids,
            distribution: distribution_from_counts(&counts, alpha)?,
        });
    }
    let degenerate = levels.len() < 3;
    if degenerate {
        log::warn!(
            "prompt {}: level partition degenerated to {} band(s)",
            spec.prompt_id,
            levels.len()
        );
    }
    Ok(LevelPartition { levels, degenerate })
}

/// KL(p ‖ q) = Σ p(w)·ln(p(w)/q(w)) in nats, with 0·ln(0/q) = 0.
/// The reference q must be strictly positive wherever p has mass; level
/// distributions guarantee this through smoothing.
pub fn kl_divergence(p: &WordDistribution, q: &WordDistribution) -> Result<f64, FeaturesError> {
    if p.len() != q.len() {
        return Err(FeaturesError::SizeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p
        .probabilities
        .iter()
        .zip(&q.probabilities)
        .enumerate()
    {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(FeaturesError::NonPositiveReference(i));
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum)
}

/// The feature vector of the content-aware scorer: KL of the essay against
/// each level, lowest band first. Shorter than 3 when the partition is
/// degenerate.
pub fn content_features(
    essay: &WordDistribution,
    levels: &LevelPartition,
) -> Result<Vec<f64>, FeaturesError> {
    levels
        .levels
        .iter()
        .map(|level| kl_divergence(essay, &level.distribution))
        .collect()
}
