//! Essay corpus ingestion, per-prompt score specifications and distribution
//! statistics, and cross-validation fold construction.
//!
//! The on-disk input is the tab-separated format of the public ASAP release:
//! a header row followed by one essay per line. Column names are configurable
//! through [`ColumnMap`]; the defaults match the released file.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse column '{column}' value '{value}'")]
    UnparsableField {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: score {score} outside range {min}..={max} for prompt {prompt_id}")]
    ScoreOutOfRange {
        row: usize,
        prompt_id: u32,
        score: i64,
        min: i64,
        max: i64,
    },
    #[error("row {row}: duplicate essay_id {essay_id}")]
    DuplicateEssayId { row: usize, essay_id: u64 },
    #[error("row {row}: essay text is empty")]
    EmptyText { row: usize },
    #[error("unknown prompt {0}")]
    UnknownPrompt(u32),
    #[error("prompt {prompt_id}: invalid score range {min}..={max}")]
    InvalidRange {
        prompt_id: u32,
        min: i64,
        max: i64,
    },
    #[error("no records for prompt {0}")]
    EmptyPrompt(u32),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("prompt {prompt_id} has {have} records, need at least {need} for {need} folds")]
    TooFewRecords {
        prompt_id: u32,
        have: usize,
        need: usize,
    },
    #[error("partition file: {0}")]
    MalformedPartition(String),
    #[error("partition references unknown essay_id {0}")]
    UnknownEssayId(u64),
    #[error("fold {fold}: sets overlap on essay_id {essay_id}")]
    OverlappingSets { fold: usize, essay_id: u64 },
    #[error("fold {fold} does not cover essay_id {essay_id} of prompt {prompt_id}")]
    IncompleteCoverage {
        fold: usize,
        essay_id: u64,
        prompt_id: u32,
    },
    #[error("essay_id {0} appears in {1} test sets across folds (expected exactly 1)")]
    TestMultiplicity(u64, usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One essay with identity, prompt membership, raw text, and resolved score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayRecord {
    pub essay_id: u64,
    pub prompt_id: u32,
    pub text: String,
    pub score: i64,
}

/// The score range an essay of a given prompt may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: u32,
    pub min_score: i64,
    pub max_score: i64,
}

impl PromptSpec {
    pub fn new(prompt_id: u32, min_score: i64, max_score: i64) -> Result<Self, CorpusError> {
        if min_score >= max_score {
            return Err(CorpusError::InvalidRange {
                prompt_id,
                min: min_score,
                max: max_score,
            });
        }
        Ok(Self {
            prompt_id,
            min_score,
            max_score,
        })
    }

    pub fn contains(&self, score: i64) -> bool {
        (self.min_score..=self.max_score).contains(&score)
    }

    /// Number of distinct integer scores in the range.
    pub fn width(&self) -> usize {
        (self.max_score - self.min_score + 1) as usize
    }
}

/// Registry of per-prompt score ranges.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PromptTable {
    specs: BTreeMap<u32, PromptSpec>,
}

impl PromptTable {
    pub fn new(specs: impl IntoIterator<Item = PromptSpec>) -> Self {
        Self {
            specs: specs.into_iter().map(|s| (s.prompt_id, s)).collect(),
        }
    }

    /// The eight prompts of the ASAP release. Prompt 8 uses the 0-60 range;
    /// scores above 40 are rare but legal.
    pub fn asap() -> Self {
        let ranges: [(u32, i64, i64); 8] = [
            (1, 2, 12),
            (2, 1, 6),
            (3, 0, 3),
            (4, 0, 3),
            (5, 0, 4),
            (6, 0, 4),
            (7, 0, 30),
            (8, 0, 60),
        ];
        Self::new(ranges.iter().map(|&(p, lo, hi)| PromptSpec {
            prompt_id: p,
            min_score: lo,
            max_score: hi,
        }))
    }

    pub fn spec(&self, prompt_id: u32) -> Result<&PromptSpec, CorpusError> {
        self.specs
            .get(&prompt_id)
            .ok_or(CorpusError::UnknownPrompt(prompt_id))
    }

    pub fn insert(&mut self, spec: PromptSpec) {
        self.specs.insert(spec.prompt_id, spec);
    }

    pub fn prompt_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.specs.keys().copied()
    }
}

/// Names of the four columns read from the tab-separated corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub essay_id: String,
    pub prompt_id: String,
    pub text: String,
    pub score: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            essay_id: "essay_id".into(),
            prompt_id: "essay_set".into(),
            text: "essay".into(),
            score: "domain1_score".into(),
        }
    }
}

/// Load a tab-separated corpus file, validating every row against `table`.
///
/// The file is decoded as UTF-8 with lossy replacement; the public ASAP file
/// carries a handful of non-UTF-8 bytes and replacements are logged rather
/// than fatal. Rows are returned in file order.
pub fn load_asap(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
    table: &PromptTable,
) -> Result<Vec<EssayRecord>, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    if let std::borrow::Cow::Owned(_) = text {
        log::warn!(
            "{}: invalid UTF-8 bytes replaced during decoding",
            path.display()
        );
    }
    parse_asap_tsv(&text, columns, table)
}

fn parse_asap_tsv(
    text: &str,
    columns: &ColumnMap,
    table: &PromptTable,
) -> Result<Vec<EssayRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let id_col = col(&columns.essay_id)?;
    let prompt_col = col(&columns.prompt_id)?;
    let text_col = col(&columns.text)?;
    let score_col = col(&columns.score)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        // Header is line 1; data rows are reported 1-based from line 2.
        let line = i + 2;
        let field = |idx: usize, name: &str| -> Result<&str, CorpusError> {
            row.get(idx).ok_or_else(|| CorpusError::UnparsableField {
                row: line,
                column: name.to_string(),
                value: String::new(),
            })
        };
        let parse_int = |idx: usize, name: &str| -> Result<i64, CorpusError> {
            let raw = field(idx, name)?.trim();
            raw.parse().map_err(|_| CorpusError::UnparsableField {
                row: line,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };

        let essay_id = parse_int(id_col, &columns.essay_id)? as u64;
        let prompt_id = parse_int(prompt_col, &columns.prompt_id)? as u32;
        let score = parse_int(score_col, &columns.score)?;
        let body = field(text_col, &columns.text)?.to_string();

        if body.trim().is_empty() {
            return Err(CorpusError::EmptyText { row: line });
        }
        let spec = table.spec(prompt_id)?;
        if !spec.contains(score) {
            return Err(CorpusError::ScoreOutOfRange {
                row: line,
                prompt_id,
                score,
                min: spec.min_score,
                max: spec.max_score,
            });
        }
        if !seen.insert(essay_id) {
            return Err(CorpusError::DuplicateEssayId {
                row: line,
                essay_id,
            });
        }
        records.push(EssayRecord {
            essay_id,
            prompt_id,
            text: body,
            score,
        });
    }
    Ok(records)
}

/// Write records as one JSON object per line; [`read_corpus`] round-trips.
pub fn write_corpus(path: impl AsRef<Path>, records: &[EssayRecord]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<EssayRecord>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CorpusError::Json))
        .collect()
}

/// Score distribution summary for one prompt.
///
/// `n_lower` and `n_higher` count essays strictly below and strictly above
/// the highest-frequency score, so together with the count at the mode they
/// sum to the prompt's essay count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStats {
    pub prompt_id: u32,
    pub histogram: BTreeMap<i64, u64>,
    pub highest_frequency_score: i64,
    pub n_lower: u64,
    pub n_higher: u64,
}

impl PromptStats {
    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }

    /// Count of essays scored exactly at the highest-frequency score.
    pub fn n_at_mode(&self) -> u64 {
        *self
            .histogram
            .get(&self.highest_frequency_score)
            .unwrap_or(&0)
    }
}

/// Histogram the scores of one prompt and locate the modal score.
/// Ties between equally frequent scores resolve to the lowest score.
pub fn compute_stats(records: &[EssayRecord], prompt_id: u32) -> Result<PromptStats, CorpusError> {
    let mut histogram: BTreeMap<i64, u64> = BTreeMap::new();
    for record in records.iter().filter(|r| r.prompt_id == prompt_id) {
        *histogram.entry(record.score).or_insert(0) += 1;
    }
    if histogram.is_empty() {
        return Err(CorpusError::EmptyPrompt(prompt_id));
    }
    let (&hfs, _) = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("non-empty histogram");
    let n_lower = histogram
        .iter()
        .filter(|(&s, _)| s < hfs)
        .map(|(_, &c)| c)
        .sum();
    let n_higher = histogram
        .iter()
        .filter(|(&s, _)| s > hfs)
        .map(|(_, &c)| c)
        .sum();
    Ok(PromptStats {
        prompt_id,
        histogram,
        highest_frequency_score: hfs,
        n_lower,
        n_higher,
    })
}

/// Stats for every prompt present in `records`.
pub fn compute_all_stats(records: &[EssayRecord]) -> BTreeMap<u32, PromptStats> {
    let prompts: BTreeSet<u32> = records.iter().map(|r| r.prompt_id).collect();
    prompts
        .into_iter()
        .map(|p| (p, compute_stats(records, p).expect("prompt present")))
        .collect()
}

/// One train/dev/test split. Sets hold essay ids and span every prompt that
/// was given to [`make_folds`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_index: usize,
    pub train_ids: BTreeSet<u64>,
    pub dev_ids: BTreeSet<u64>,
    pub test_ids: BTreeSet<u64>,
}

/// Build `k` cross-validation folds, stratified by score within each prompt.
///
/// Essays are distributed round-robin into `k` buckets per prompt (going
/// score group by score group so every bucket sees the full score spread);
/// fold `i` tests on bucket `i`, validates on bucket `i+1 mod k`, and trains
/// on the rest. Deterministic for a fixed seed.
pub fn make_folds(
    records: &[EssayRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldAssignment>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidFoldCount(k));
    }
    let mut by_prompt: BTreeMap<u32, Vec<&EssayRecord>> = BTreeMap::new();
    for record in records {
        by_prompt.entry(record.prompt_id).or_default().push(record);
    }
    let mut buckets: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); k];
    for (&prompt_id, prompt_records) in &by_prompt {
        if prompt_records.len() < k {
            return Err(CorpusError::TooFewRecords {
                prompt_id,
                have: prompt_records.len(),
                need: k,
            });
        }
        let mut by_score: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
        for record in prompt_records {
            by_score
                .entry(record.score)
                .or_default()
                .push(record.essay_id);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(prompt_id) << 32));
        let mut cursor = 0usize;
        for ids in by_score.values_mut() {
            ids.sort_unstable();
            ids.shuffle(&mut rng);
            for &id in ids.iter() {
                buckets[cursor % k].insert(id);
                cursor += 1;
            }
        }
    }
    let all_ids: BTreeSet<u64> = records.iter().map(|r| r.essay_id).collect();
    let folds = (0..k)
        .map(|i| {
            let test_ids = buckets[i].clone();
            let dev_ids = buckets[(i + 1) % k].clone();
            let train_ids = all_ids
                .iter()
                .copied()
                .filter(|id| !test_ids.contains(id) && !dev_ids.contains(id))
                .collect();
            FoldAssignment {
                fold_index: i,
                train_ids,
                dev_ids,
                test_ids,
            }
        })
        .collect();
    Ok(folds)
}

#[derive(Serialize, Deserialize)]
struct PartitionSets {
    train: Vec<u64>,
    dev: Vec<u64>,
    test: Vec<u64>,
}

/// Read fold assignments from a JSON document mapping fold index to
/// train/dev/test id arrays, so externally published partitions can be
/// used verbatim.
pub fn load_partitions(path: impl AsRef<Path>) -> Result<Vec<FoldAssignment>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw: BTreeMap<String, PartitionSets> =
        serde_json::from_str(&text).map_err(|e| CorpusError::MalformedPartition(e.to_string()))?;
    let mut folds = Vec::with_capacity(raw.len());
    for (key, sets) in raw {
        let fold_index: usize = key
            .parse()
            .map_err(|_| CorpusError::MalformedPartition(format!("bad fold index '{key}'")))?;
        folds.push(FoldAssignment {
            fold_index,
            train_ids: sets.train.into_iter().collect(),
            dev_ids: sets.dev.into_iter().collect(),
            test_ids: sets.test.into_iter().collect(),
        });
    }
    folds.sort_by_key(|f| f.fold_index);
    for (i, fold) in folds.iter().enumerate() {
        if fold.fold_index != i {
            return Err(CorpusError::MalformedPartition(format!(
                "fold indices must be contiguous from 0, found {}",
                fold.fold_index
            )));
        }
    }
    Ok(folds)
}

pub fn write_partitions(
    path: impl AsRef<Path>,
    folds: &[FoldAssignment],
) -> Result<(), CorpusError> {
    let raw: BTreeMap<String, PartitionSets> = folds
        .iter()
        .map(|f| {
            (
                f.fold_index.to_string(),
                PartitionSets {
                    train: f.train_ids.iter().copied().collect(),
                    dev: f.dev_ids.iter().copied().collect(),
                    test: f.test_ids.iter().copied().collect(),
                },
            )
        })
        .collect();
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&raw)?;
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Check the partition invariants against a corpus: within each fold the
/// three sets are disjoint and cover every essay, and across folds the test
/// sets hit each essay exactly once.
pub fn validate_partitions(
    folds: &[FoldAssignment],
    records: &[EssayRecord],
) -> Result<(), CorpusError> {
    let by_id: HashMap<u64, u32> = records.iter().map(|r| (r.essay_id, r.prompt_id)).collect();
    let mut test_seen: HashMap<u64, usize> = HashMap::new();
    for fold in folds {
        let mut seen: HashSet<u64> = HashSet::new();
        for id in fold
            .train_ids
            .iter()
            .chain(&fold.dev_ids)
            .chain(&fold.test_ids)
        {
            if !by_id.contains_key(id) {
                return Err(CorpusError::UnknownEssayId(*id));
            }
            if !seen.insert(*id) {
                return Err(CorpusError::OverlappingSets {
                    fold: fold.fold_index,
                    essay_id: *id,
                });
            }
        }
        for record in records {
            if !seen.contains(&record.essay_id) {
                return Err(CorpusError::IncompleteCoverage {
                    fold: fold.fold_index,
                    essay_id: record.essay_id,
                    prompt_id: record.prompt_id,
                });
            }
        }
        for id in &fold.test_ids {
            *test_seen.entry(*id).or_insert(0) += 1;
        }
    }
    for record in records {
        let n = test_seen.get(&record.essay_id).copied().unwrap_or(0);
        if n != 1 {
            return Err(CorpusError::TestMultiplicity(record.essay_id, n));
        }
    }
    Ok(())
}
