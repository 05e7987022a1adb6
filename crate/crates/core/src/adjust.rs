//! Score adjustment for back-translated essays and assembly of the augmented
//! training corpus.
//!
//! An adjustment rule is a predicate over the original score plus a clamped
//! signed offset. Rules are grouped into per-prompt plans; within a prompt
//! the first matching rule wins and unmatched essays keep their original
//! score. The built-in plans mirror the published experimental conditions:
//! identity everywhere, +1 above the modal score on the wide-range prompts
//! (with an optional −1 at or below it on prompt 8), and unconditional
//! ±v plans.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtranslate::BackTranslationRecord;
use crate::corpus::{EssayRecord, PromptSpec, PromptStats, PromptTable};

#[derive(Debug, Error)]
pub enum AdjustError {
    #[error("score {score} outside range {min}..={max}")]
    ScoreOutOfRange { score: i64, min: i64, max: i64 },
    #[error("offset must be non-negative, got {0}")]
    NegativeOffset(i64),
    #[error("unknown built-in plan '{0}'")]
    UnknownPlan(String),
    #[error("rule plan has no rules for prompt {0}")]
    MissingPrompt(u32),
    #[error("no stats available for prompt {0}")]
    MissingStats(u32),
    #[error("back-translation of essay {essay_id} does not match any corpus record")]
    UnknownSource { essay_id: u64 },
    #[error("record {essay_id} belongs to prompt {found}, expected {expected}")]
    PromptMismatch {
        essay_id: u64,
        found: u32,
        expected: u32,
    },
    #[error("cannot parse predicate '{0}' (expected always | score_gt:N | score_le:N)")]
    BadPredicate(String),
    #[error("plan file {path}: {message}")]
    BadPlanFile { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Condition on the original score deciding whether a rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Always,
    ScoreGt(i64),
    ScoreLe(i64),
}

impl Predicate {
    pub fn holds(&self, score: i64) -> bool {
        match *self {
            Predicate::Always => true,
            Predicate::ScoreGt(threshold) => score > threshold,
            Predicate::ScoreLe(threshold) => score <= threshold,
        }
    }

    pub fn parse(text: &str) -> Result<Self, AdjustError> {
        if text == "always" {
            return Ok(Predicate::Always);
        }
        if let Some(n) = text.strip_prefix("score_gt:") {
            if let Ok(v) = n.parse() {
                return Ok(Predicate::ScoreGt(v));
            }
        }
        if let Some(n) = text.strip_prefix("score_le:") {
            if let Ok(v) = n.parse() {
                return Ok(Predicate::ScoreLe(v));
            }
        }
        Err(AdjustError::BadPredicate(text.to_string()))
    }
}

impl std::fmt::Display for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Predicate::Always => write!(f, "always"),
            Predicate::ScoreGt(n) => write!(f, "score_gt:{n}"),
            Predicate::ScoreLe(n) => write!(f, "score_le:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Identity,
    Up,
    Down,
}

/// The original score carried over unchanged.
pub fn adjust_identity(score: i64) -> i64 {
    score
}

fn check_range(score: i64, spec: &PromptSpec) -> Result<(), AdjustError> {
    if !spec.contains(score) {
        return Err(AdjustError::ScoreOutOfRange {
            score,
            min: spec.min_score,
            max: spec.max_score,
        });
    }
    Ok(())
}

fn check_offset(v: i64) -> Result<(), AdjustError> {
    if v < 0 {
        return Err(AdjustError::NegativeOffset(v));
    }
    Ok(())
}

/// min(max_score, score + v).
pub fn adjust_up(score: i64, spec: &PromptSpec, v: i64) -> Result<i64, AdjustError> {
    check_range(score, spec)?;
    check_offset(v)?;
    Ok((score + v).min(spec.max_score))
}

/// max(min_score, score − v).
pub fn adjust_down(score: i64, spec: &PromptSpec, v: i64) -> Result<i64, AdjustError> {
    check_range(score, spec)?;
    check_offset(v)?;
    Ok((score - v).max(spec.min_score))
}

/// A named predicate + direction + offset, with the prompt's bounds baked in
/// so an applied rule can never push a score out of range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentRule {
    pub name: String,
    pub predicate: Predicate,
    pub direction: Direction,
    pub v: i64,
    pub clamp: (i64, i64),
}

impl AdjustmentRule {
    pub fn identity(name: impl Into<String>, spec: &PromptSpec) -> Self {
        Self {
            name: name.into(),
            predicate: Predicate::Always,
            direction: Direction::Identity,
            v: 0,
            clamp: (spec.min_score, spec.max_score),
        }
    }

    pub fn matches(&self, score: i64) -> bool {
        match self.direction {
            Direction::Identity => true,
            _ => self.predicate.holds(score),
        }
    }

    /// New score for an essay this rule matched.
    pub fn apply(&self, score: i64) -> i64 {
        let (min, max) = self.clamp;
        match self.direction {
            Direction::Identity => score,
            Direction::Up => (score + self.v).min(max),
            Direction::Down => (score - self.v).max(min),
        }
    }
}

/// Whether built-in plans read their thresholds from the observed prompt
/// statistics or pin the published constants (16 for prompt 7, 40 for
/// prompt 8) for exact replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    Observed,
    PaperConstants,
}

const PAPER_THRESHOLDS: [(u32, i64); 2] = [(7, 16), (8, 40)];

/// Ordered per-prompt rule lists; first matching rule wins, identity is the
/// fallback for every prompt in scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePlan {
    pub name: String,
    rules: BTreeMap<u32, Vec<AdjustmentRule>>,
}

/// Names of the built-in plans, in the order the experiments report them.
pub const BUILTIN_PLAN_NAMES: [&str; 5] =
    ["identity-all", "eq4", "eq4+eq5", "eq2-all(v)", "eq3-all(v)"];

impl RulePlan {
    pub fn rules_for(&self, prompt_id: u32) -> Result<&[AdjustmentRule], AdjustError> {
        self.rules
            .get(&prompt_id)
            .map(|r| r.as_slice())
            .ok_or(AdjustError::MissingPrompt(prompt_id))
    }

    pub fn prompt_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.rules.keys().copied()
    }

    /// Resolve the score for one original record under this plan.
    pub fn adjusted_score(&self, record: &EssayRecord) -> Result<(i64, String), AdjustError> {
        let rules = self.rules_for(record.prompt_id)?;
        for rule in rules {
            if rule.matches(record.score) {
                return Ok((rule.apply(record.score), rule.name.clone()));
            }
        }
        Ok((record.score, "identity".to_string()))
    }

    fn threshold_for(
        prompt_id: u32,
        stats: &BTreeMap<u32, PromptStats>,
        mode: ThresholdMode,
    ) -> Result<i64, AdjustError> {
        match mode {
            ThresholdMode::Observed => stats
                .get(&prompt_id)
                .map(|s| s.highest_frequency_score)
                .ok_or(AdjustError::MissingStats(prompt_id)),
            ThresholdMode::PaperConstants => PAPER_THRESHOLDS
                .iter()
                .find(|&&(p, _)| p == prompt_id)
                .map(|&(_, t)| t)
                .ok_or(AdjustError::MissingStats(prompt_id)),
        }
    }

    /// Construct a built-in plan covering `prompts`. `eq2-all(N)` and
    /// `eq3-all(N)` take the offset inside the name; `eq4` and `eq4+eq5`
    /// resolve their thresholds per `mode`.
    pub fn builtin(
        name: &str,
        prompts: &[u32],
        table: &PromptTable,
        stats: &BTreeMap<u32, PromptStats>,
        mode: ThresholdMode,
    ) -> Result<Self, AdjustError> {
        let mut rules: BTreeMap<u32, Vec<AdjustmentRule>> = BTreeMap::new();
        for &prompt_id in prompts {
            let spec = table.spec(prompt_id)?;
            let mut list = Vec::new();
            match name {
                "identity-all" => {}
                "eq4" | "eq4+eq5" => {
                    // Defined only for the wide-range prompts 7 and 8; other
                    // prompts fall through to identity.
                    if prompt_id == 7 || prompt_id == 8 {
                        let threshold = Self::threshold_for(prompt_id, stats, mode)?;
                        list.push(AdjustmentRule {
                            name: format!("up-above-mode(p{prompt_id})"),
                            predicate: Predicate::ScoreGt(threshold),
                            direction: Direction::Up,
                            v: 1,
                            clamp: (spec.min_score, spec.max_score),
                        });
                        if name == "eq4+eq5" && prompt_id == 8 {
                            list.push(AdjustmentRule {
                                name: "down-at-or-below-mode(p8)".to_string(),
                                predicate: Predicate::ScoreLe(threshold),
                                direction: Direction::Down,
                                v: 1,
                                clamp: (spec.min_score, spec.max_score),
                            });
                        }
                    }
                }
                other => {
                    let parsed = parse_all_plan(other)
                        .ok_or_else(|| AdjustError::UnknownPlan(other.to_string()))?;
                    let (direction, v) = parsed;
                    check_offset(v)?;
                    list.push(AdjustmentRule {
                        name: other.to_string(),
                        predicate: Predicate::Always,
                        direction,
                        v,
                        clamp: (spec.min_score, spec.max_score),
                    });
                }
            }
            list.push(AdjustmentRule::identity("identity", spec));
            rules.insert(prompt_id, list);
        }
        Ok(Self {
            name: name.to_string(),
            rules,
        })
    }

    /// Load a plan from a JSON file mapping prompt id to rule list; clamp
    /// bounds come from `table`. Prompts in scope but absent from the file
    /// get the identity fallback only if listed with an empty array.
    pub fn from_file(path: impl AsRef<Path>, table: &PromptTable) -> Result<Self, AdjustError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AdjustError::BadPlanFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let raw: BTreeMap<String, Vec<RuleFileEntry>> =
            serde_json::from_str(&text).map_err(|e| AdjustError::BadPlanFile {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let mut rules = BTreeMap::new();
        for (key, entries) in raw {
            let prompt_id: u32 = key.parse().map_err(|_| AdjustError::BadPlanFile {
                path: path.display().to_string(),
                message: format!("bad prompt id '{key}'"),
            })?;
            let spec = table.spec(prompt_id)?;
            let mut list = Vec::new();
            for (i, entry) in entries.into_iter().enumerate() {
                check_offset(entry.v)?;
                list.push(AdjustmentRule {
                    name: entry
                        .name
                        .unwrap_or_else(|| format!("rule{}(p{prompt_id})", i + 1)),
                    predicate: Predicate::parse(&entry.predicate)?,
                    direction: entry.direction,
                    v: entry.v,
                    clamp: (spec.min_score, spec.max_score),
                });
            }
            list.push(AdjustmentRule::identity("identity", spec));
            rules.insert(prompt_id, list);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".to_string());
        Ok(Self { name, rules })
    }
}

#[derive(Deserialize)]
struct RuleFileEntry {
    #[serde(default)]
    name: Option<String>,
    predicate: String,
    direction: Direction,
    #[serde(default)]
    v: i64,
}

/// Parse `eq2-all(N)` / `eq3-all(N)` names into (direction, offset).
fn parse_all_plan(name: &str) -> Option<(Direction, i64)> {
    let rest = name.strip_suffix(')')?;
    let (head, v) = rest.split_once("-all(")?;
    let v: i64 = v.parse().ok()?;
    match head {
        "eq2" => Some((Direction::Up, v)),
        "eq3" => Some((Direction::Down, v)),
        _ => None,
    }
}

/// An augmented essay: a back-translated text re-scored by a plan, linked to
/// its source record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedEssay {
    pub record: EssayRecord,
    pub source_id: u64,
    pub pivot: String,
    pub rule: String,
}

/// Originals plus their re-scored back-translations. Augmented records get
/// fresh essay ids above the largest original id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedCorpus {
    pub originals: Vec<EssayRecord>,
    pub augmented: Vec<AugmentedEssay>,
}

impl AugmentedCorpus {
    /// Essays whose adjusted score differs from the source score.
    pub fn changed_count(&self) -> usize {
        let by_id: BTreeMap<u64, i64> = self
            .originals
            .iter()
            .map(|r| (r.essay_id, r.score))
            .collect();
        self.augmented
            .iter()
            .filter(|a| by_id.get(&a.source_id) != Some(&a.record.score))
            .count()
    }

    /// Essays matched by a non-identity rule (whether or not clamping left
    /// the score unchanged).
    pub fn processed_count(&self) -> usize {
        self.augmented
            .iter()
            .filter(|a| a.rule != "identity")
            .count()
    }

    /// Per-rule counts of matched essays.
    pub fn rule_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.augmented {
            *counts.entry(a.rule.clone()).or_insert(0) += 1;
        }
        counts
    }
}

fn augment_with_base(
    pairs: &[(EssayRecord, BackTranslationRecord)],
    stats: &BTreeMap<u32, PromptStats>,
    plan: &RulePlan,
    id_base: u64,
) -> Result<Vec<AugmentedEssay>, AdjustError> {
    let mut next_id = id_base;
    let mut augmented = Vec::with_capacity(pairs.len());
    for (original, bt) in pairs {
        if original.essay_id != bt.essay_id {
            return Err(AdjustError::UnknownSource {
                essay_id: bt.essay_id,
            });
        }
        if !stats.contains_key(&original.prompt_id) {
            return Err(AdjustError::MissingStats(original.prompt_id));
        }
        let (score, rule) = plan.adjusted_score(original)?;
        augmented.push(AugmentedEssay {
            record: EssayRecord {
                essay_id: next_id,
                prompt_id: original.prompt_id,
                text: bt.text.clone(),
                score,
            },
            source_id: original.essay_id,
            pivot: bt.pivot.clone(),
            rule,
        });
        next_id += 1;
    }
    Ok(augmented)
}

/// Apply a rule plan to paired (original, back-translation) records of one
/// prompt, producing the augmented corpus of doubled size.
pub fn apply_rule_plan(
    pairs: &[(EssayRecord, BackTranslationRecord)],
    stats: &PromptStats,
    plan: &RulePlan,
) -> Result<AugmentedCorpus, AdjustError> {
    for (original, _) in pairs {
        if original.prompt_id != stats.prompt_id {
            return Err(AdjustError::PromptMismatch {
                essay_id: original.essay_id,
                found: original.prompt_id,
                expected: stats.prompt_id,
            });
        }
    }
    let originals: Vec<EssayRecord> = pairs.iter().map(|(o, _)| o.clone()).collect();
    let id_base = originals.iter().map(|r| r.essay_id).max().unwrap_or(0) + 1;
    let mut stats_map = BTreeMap::new();
    stats_map.insert(stats.prompt_id, stats.clone());
    let augmented = augment_with_base(pairs, &stats_map, plan, id_base)?;
    Ok(AugmentedCorpus {
        originals,
        augmented,
    })
}

/// Multi-prompt augmentation: join back-translations to their sources and
/// apply the plan, assigning globally unique ids to the augmented records.
pub fn augment_corpus(
    originals: &[EssayRecord],
    translations: &[BackTranslationRecord],
    stats: &BTreeMap<u32, PromptStats>,
    plan: &RulePlan,
) -> Result<AugmentedCorpus, AdjustError> {
    let by_id: BTreeMap<u64, &EssayRecord> =
        originals.iter().map(|r| (r.essay_id, r)).collect();
    let mut pairs = Vec::with_capacity(translations.len());
    for bt in translations {
        let original = by_id
            .get(&bt.essay_id)
            .ok_or(AdjustError::UnknownSource {
                essay_id: bt.essay_id,
            })?;
        pairs.push(((*original).clone(), bt.clone()));
    }
    pairs.sort_by(|a, b| {
        (a.1.pivot.as_str(), a.0.essay_id).cmp(&(b.1.pivot.as_str(), b.0.essay_id))
    });
    let id_base = originals.iter().map(|r| r.essay_id).max().unwrap_or(0) + 1;
    let augmented = augment_with_base(&pairs, stats, plan, id_base)?;
    Ok(AugmentedCorpus {
        originals: originals.to_vec(),
        augmented,
    })
}
