//! Fold materialization and the augmentation leakage guard.
//!
//! Back-translations inherit their source essay's fold, so the test set is
//! always original essays exclusively and no test essay's round trip can
//! reach train or dev of the same fold.

use std::collections::BTreeSet;

use crate::adjust::{AugmentedCorpus, AugmentedEssay};
use crate::corpus::{EssayRecord, FoldAssignment};

use super::HarnessError;

/// One essay as the trainer sees it: the record plus, for augmented essays,
/// the source link.
#[derive(Debug, Clone)]
pub struct TrainEssay {
    pub record: EssayRecord,
    /// (source essay id, pivot) when this is a back-translated essay.
    pub source: Option<(u64, String)>,
}

impl TrainEssay {
    fn original(record: &EssayRecord) -> Self {
        Self {
            record: record.clone(),
            source: None,
        }
    }

    fn augmented(essay: &AugmentedEssay) -> Self {
        Self {
            record: essay.record.clone(),
            source: Some((essay.source_id, essay.pivot.clone())),
        }
    }
}

/// Train/dev/test essays of one fold, restricted to one prompt.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: Vec<TrainEssay>,
    pub dev: Vec<TrainEssay>,
    pub test: Vec<EssayRecord>,
}

impl FoldData {
    pub fn augmented_in_train(&self) -> usize {
        self.train.iter().filter(|e| e.source.is_some()).count()
    }
}

/// Resolve a fold against a (possibly augmented) corpus for one prompt.
///
/// Original essays follow their fold sets directly; augmented essays follow
/// their source. The assembled sets are then re-checked against the leakage
/// rules, and any violation is a hard failure.
pub fn materialize_fold(
    fold: &FoldAssignment,
    corpus: &AugmentedCorpus,
    prompt_id: u32,
    dev_original_only: bool,
) -> Result<FoldData, HarnessError> {
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for record in corpus.originals.iter().filter(|r| r.prompt_id == prompt_id) {
        if fold.test_ids.contains(&record.essay_id) {
            test.push(record.clone());
        } else if fold.dev_ids.contains(&record.essay_id) {
            dev.push(TrainEssay::original(record));
        } else if fold.train_ids.contains(&record.essay_id) {
            train.push(TrainEssay::original(record));
        }
    }
    for essay in corpus
        .augmented
        .iter()
        .filter(|a| a.record.prompt_id == prompt_id)
    {
        if fold.train_ids.contains(&essay.source_id) {
            train.push(TrainEssay::augmented(essay));
        } else if fold.dev_ids.contains(&essay.source_id) && !dev_original_only {
            dev.push(TrainEssay::augmented(essay));
        }
        // Sources in the test set contribute nothing: the test set stays
        // original and their round trips are withheld from train/dev.
    }
    let data = FoldData { train, dev, test };
    check_leakage(fold, corpus, &data)?;
    Ok(data)
}

/// The two leakage rules, checked on materialized sets.
fn check_leakage(
    fold: &FoldAssignment,
    corpus: &AugmentedCorpus,
    data: &FoldData,
) -> Result<(), HarnessError> {
    let augmented_ids: BTreeSet<u64> =
        corpus.augmented.iter().map(|a| a.record.essay_id).collect();
    // The materialized test set only draws from originals, so the claimed
    // fold sets are what must be screened for augmented ids.
    for id in &fold.test_ids {
        if augmented_ids.contains(id) {
            return Err(HarnessError::Leakage {
                fold: fold.fold_index,
                message: format!("augmented essay {id} is listed in the test set"),
            });
        }
    }
    debug_assert!(data
        .test
        .iter()
        .all(|r| !augmented_ids.contains(&r.essay_id)));
    for essay in data.train.iter().chain(&data.dev) {
        if let Some((source_id, _)) = &essay.source {
            if fold.test_ids.contains(source_id) {
                return Err(HarnessError::Leakage {
                    fold: fold.fold_index,
                    message: format!(
                        "back-translation of test essay {source_id} reached train/dev"
                    ),
                });
            }
        }
    }
    Ok(())
}
