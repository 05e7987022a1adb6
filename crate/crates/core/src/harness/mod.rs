//! Experiment runner: corpus → augmentation → folds → training → QWK tables.

mod config;
mod data;
mod report;
mod train;

pub use config::{AugmentationSource, Condition, ExperimentConfig, ModelSettings};
pub use data::{materialize_fold, FoldData, TrainEssay};
pub use report::{
    aggregate, compute_improvements, load_results_dir, render_csv, render_text, write_summaries,
    CellSummary, Improvement, TrainReport,
};
pub use train::{train_eval_fold, FoldReport};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::adjust::{augment_corpus, AugmentedCorpus, RulePlan};
use crate::backtranslate::{
    load_precomputed, run_backtranslation, validate_against_corpus, BackTranslationRecord,
    HttpBackend, RetryPolicy, TranslationCache,
};
use crate::corpus::{
    compute_stats, load_asap, load_partitions, make_folds, read_corpus, validate_partitions,
    EssayRecord, FoldAssignment, PromptStats, PromptTable,
};
use crate::model::save_checkpoint;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid experiment config: {message}")]
    BadConfig { message: String },
    #[error("fold {fold}: leakage guard tripped: {message}")]
    Leakage { fold: usize, message: String },
    #[error("prompt {prompt_id} fold {fold} aborted at epoch {epoch}: {message}")]
    FoldAborted {
        prompt_id: u32,
        fold: usize,
        epoch: usize,
        message: String,
    },
    #[error("{failed} of {total} fold jobs failed; partial results persisted")]
    FoldsFailed { failed: usize, total: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    TextPrep(#[from] crate::textprep::TextPrepError),
    #[error(transparent)]
    Adjust(#[from] crate::adjust::AdjustError),
    #[error(transparent)]
    BackTranslate(#[from] crate::backtranslate::BackTranslateError),
    #[error(transparent)]
    Features(#[from] crate::features::FeaturesError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Read a corpus from either the tab-separated release format or the JSONL
/// cache written by `ingest`, picked by file extension.
pub fn load_corpus_auto(
    path: impl AsRef<Path>,
    columns: &crate::corpus::ColumnMap,
    table: &PromptTable,
) -> Result<Vec<EssayRecord>, HarnessError> {
    let path = path.as_ref();
    let is_jsonl = path
        .extension()
        .is_some_and(|e| e == "jsonl" || e == "ndjson");
    if is_jsonl {
        Ok(read_corpus(path)?)
    } else {
        Ok(load_asap(path, columns, table)?)
    }
}

/// Deterministic per-job seed, combined from the experiment seed and the
/// job coordinates.
fn derive_seed(base: u64, prompt_id: u32, condition_index: usize, fold: usize) -> u64 {
    let mut seed = base ^ 0x243f_6a88_85a3_08d3;
    for part in [u64::from(prompt_id), condition_index as u64, fold as u64] {
        seed ^= part.wrapping_add(0x9e37_79b9_7f4a_7c15);
        seed = seed.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        seed ^= seed >> 27;
    }
    seed
}

fn resolve_plan(
    condition: &Condition,
    config: &ExperimentConfig,
    table: &PromptTable,
    stats: &BTreeMap<u32, PromptStats>,
) -> Result<RulePlan, HarnessError> {
    match &condition.plan {
        None => Ok(RulePlan::builtin(
            "identity-all",
            &config.prompts,
            table,
            stats,
            config.threshold_mode(),
        )?),
        Some(name) if name.contains('/') || name.ends_with(".json") => {
            Ok(RulePlan::from_file(name, table)?)
        }
        Some(name) => Ok(RulePlan::builtin(
            name,
            &config.prompts,
            table,
            stats,
            config.threshold_mode(),
        )?),
    }
}

fn gather_translations(
    condition: &Condition,
    records: &[EssayRecord],
) -> Result<Vec<BackTranslationRecord>, HarnessError> {
    match &condition.augmentation {
        AugmentationSource::None => Ok(Vec::new()),
        AugmentationSource::Files { paths } => {
            let mut all = Vec::new();
            for path in paths {
                all.extend(load_precomputed(path)?);
            }
            let unknown = validate_against_corpus(&all, records, false)?;
            if !unknown.is_empty() {
                log::warn!(
                    "condition '{}': dropping {} back-translations of essays outside the selection",
                    condition.name,
                    unknown.len()
                );
                let known: std::collections::HashSet<u64> =
                    records.iter().map(|r| r.essay_id).collect();
                all.retain(|r| known.contains(&r.essay_id));
            }
            Ok(all)
        }
        AugmentationSource::Live {
            pivot,
            backend,
            cache,
        } => {
            let backend = HttpBackend::new(backend.clone());
            let cache = match cache {
                Some(path) => TranslationCache::open(path)?,
                None => TranslationCache::memory(),
            };
            Ok(run_backtranslation(
                records,
                pivot,
                &backend,
                &cache,
                &RetryPolicy::default(),
                4,
            )?)
        }
    }
}

struct FoldJob<'a> {
    prompt_id: u32,
    condition_index: usize,
    condition_name: &'a str,
    fold: &'a FoldAssignment,
    corpus: &'a AugmentedCorpus,
    epochs: usize,
}

/// Run the full experiment: every (prompt, condition, fold) job, persisting
/// per-fold results as they finish, then the aggregate summary files.
/// Fold failures are persisted with failure markers and propagated after
/// everything else has run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrainReport, HarnessError> {
    config.validate()?;
    let table = PromptTable::asap();
    let all_records = load_corpus_auto(&config.corpus, &config.columns, &table)?;
    let records: Vec<EssayRecord> = all_records
        .into_iter()
        .filter(|r| config.prompts.contains(&r.prompt_id))
        .collect();
    let mut stats: BTreeMap<u32, PromptStats> = BTreeMap::new();
    for &prompt_id in &config.prompts {
        stats.insert(prompt_id, compute_stats(&records, prompt_id)?);
    }

    let folds = match &config.partitions {
        Some(path) => {
            let folds = load_partitions(path)?;
            validate_partitions(&folds, &records)?;
            folds
        }
        None => make_folds(&records, config.k_folds, config.seed)?,
    };

    // One augmented corpus per condition; identity corpus for `none`.
    let mut corpora: Vec<AugmentedCorpus> = Vec::with_capacity(config.conditions.len());
    for condition in &config.conditions {
        let translations = gather_translations(condition, &records)?;
        if translations.is_empty() {
            corpora.push(AugmentedCorpus {
                originals: records.clone(),
                augmented: Vec::new(),
            });
        } else {
            let plan = resolve_plan(condition, config, &table, &stats)?;
            corpora.push(augment_corpus(&records, &translations, &stats, &plan)?);
        }
    }

    let mut jobs: Vec<FoldJob> = Vec::new();
    for (condition_index, condition) in config.conditions.iter().enumerate() {
        for &prompt_id in &config.prompts {
            for fold in &folds {
                jobs.push(FoldJob {
                    prompt_id,
                    condition_index,
                    condition_name: &condition.name,
                    fold,
                    corpus: &corpora[condition_index],
                    epochs: config.epochs_for(condition),
                });
            }
        }
    }

    let cursor = AtomicUsize::new(0);
    type JobOutcome = (usize, Result<FoldReport, HarnessError>);
    let outcomes: Mutex<Vec<JobOutcome>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = config.workers.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                if index >= jobs.len() {
                    break;
                }
                let job = &jobs[index];
                let spec = table.spec(job.prompt_id).expect("validated prompt");
                let seed = derive_seed(config.seed, job.prompt_id, job.condition_index, job.fold.fold_index);
                let outcome = train_eval_fold(
                    job.fold,
                    job.corpus,
                    spec,
                    &config.model,
                    job.epochs,
                    seed,
                    job.condition_name,
                    config.dev_original_only,
                )
                .and_then(|(fold_report, checkpoint)| {
                    let path = report::fold_result_path(
                        &config.output_dir,
                        job.prompt_id,
                        job.condition_name,
                        job.fold.fold_index,
                        false,
                    );
                    report::write_json(&path, &fold_report)?;
                    if config.save_checkpoints {
                        let checkpoint_path = path.with_extension("checkpoint.json");
                        save_checkpoint(&checkpoint_path, &checkpoint)?;
                    }
                    log::info!(
                        "prompt {} condition {} fold {}: test QWK {:.3} (best dev epoch {}, {:.1}s)",
                        job.prompt_id,
                        job.condition_name,
                        job.fold.fold_index,
                        fold_report.test_qwk,
                        fold_report.first_best_epoch,
                        fold_report.wall_clock_secs
                    );
                    Ok(fold_report)
                });
                outcomes.lock().expect("outcomes lock").push((index, outcome));
            });
        }
    });

    let mut outcomes = outcomes.into_inner().expect("outcomes lock");
    outcomes.sort_by_key(|(index, _)| *index);
    let mut fold_reports = Vec::new();
    let mut failures: Vec<(u32, String, usize, String)> = Vec::new();
    for (index, outcome) in outcomes {
        let job = &jobs[index];
        match outcome {
            Ok(fold_report) => fold_reports.push(fold_report),
            Err(error) => {
                let message = error.to_string();
                let path = report::fold_result_path(
                    &config.output_dir,
                    job.prompt_id,
                    job.condition_name,
                    job.fold.fold_index,
                    true,
                );
                report::write_json(&path, &serde_json::json!({ "error": message }))?;
                failures.push((
                    job.prompt_id,
                    job.condition_name.to_string(),
                    job.fold.fold_index,
                    message,
                ));
            }
        }
    }

    let baseline = config
        .conditions
        .iter()
        .find(|c| c.augmentation.is_none())
        .map(|c| c.name.clone());
    let train_report = aggregate(&fold_reports, &failures, baseline.as_deref());
    write_summaries(&config.output_dir, &train_report)?;

    if !failures.is_empty() {
        return Err(HarnessError::FoldsFailed {
            failed: failures.len(),
            total: jobs.len(),
        });
    }
    Ok(train_report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_corpus;
    use crate::backtranslate::write_augmentation_set;

    /// Synthetic prompt with score-correlated marker words so a tiny model
    /// can actually learn the mapping.
    pub(crate) fn synthetic_records(
        prompt_id: u32,
        min: i64,
        max: i64,
        n: usize,
    ) -> Vec<EssayRecord> {
        (0..n)
            .map(|i| {
                let score = min + (i as i64) % (max - min + 1);
                let marker = format!("marker{score}");
                let filler = ["the", "essay", "talks", "about", "things"];
                let mut words: Vec<String> =
                    filler.iter().take(2 + i % 4).map(|w| w.to_string()).collect();
                for _ in 0..3 {
                    words.push(marker.clone());
                }
                EssayRecord {
                    essay_id: i as u64 + 1,
                    prompt_id,
                    text: words.join(" "),
                    score,
                }
            })
            .collect()
    }

    fn tiny_settings() -> ModelSettings {
        ModelSettings {
            cell_size: 8,
            embed_dim: 6,
            max_seq_len: 30,
            batch_size: 8,
            ..ModelSettings::default()
        }
    }

    #[test]
    fn fold_report_has_one_dev_entry_per_epoch() {
        let records = synthetic_records(3, 0, 3, 30);
        let corpus = AugmentedCorpus {
            originals: records.clone(),
            augmented: Vec::new(),
        };
        let folds = make_folds(&records, 5, 1).unwrap();
        let table = PromptTable::asap();
        let (fold_report, _) = train_eval_fold(
            &folds[0],
            &corpus,
            table.spec(3).unwrap(),
            &tiny_settings(),
            50,
            9,
            "ori",
            false,
        )
        .unwrap();
        assert_eq!(fold_report.epochs_run, 50);
        assert_eq!(fold_report.dev_qwk.len(), 50);
        assert!(fold_report.first_best_epoch >= 1 && fold_report.first_best_epoch <= 50);
        // Earliest epoch wins ties: no earlier epoch may match the best.
        let best = fold_report.dev_qwk[fold_report.first_best_epoch - 1];
        for epoch in 0..fold_report.first_best_epoch - 1 {
            assert!(fold_report.dev_qwk[epoch] < best);
        }
        assert_eq!(fold_report.augmented_in_train, 0);
    }

    #[test]
    fn identity_augmentation_doubles_train_not_test() {
        let records = synthetic_records(3, 0, 3, 20);
        let translations: Vec<BackTranslationRecord> = records
            .iter()
            .map(|r| BackTranslationRecord {
                essay_id: r.essay_id,
                pivot: "zh".into(),
                text: r.text.clone(),
                backend: "identity".into(),
                ts: 0,
            })
            .collect();
        let mut stats = BTreeMap::new();
        stats.insert(3, compute_stats(&records, 3).unwrap());
        let table = PromptTable::asap();
        let plan = RulePlan::builtin(
            "identity-all",
            &[3],
            &table,
            &stats,
            crate::adjust::ThresholdMode::Observed,
        )
        .unwrap();
        let corpus = augment_corpus(&records, &translations, &stats, &plan).unwrap();
        let folds = make_folds(&records, 5, 2).unwrap();
        let (fold_report, _) = train_eval_fold(
            &folds[1],
            &corpus,
            table.spec(3).unwrap(),
            &tiny_settings(),
            3,
            9,
            "ori+zh",
            false,
        )
        .unwrap();
        assert_eq!(fold_report.train_size, 2 * folds[1].train_ids.len());
        assert_eq!(fold_report.test_size, folds[1].test_ids.len());
        assert_eq!(fold_report.augmented_in_train, folds[1].train_ids.len());
    }

    #[test]
    fn rerun_with_same_seed_is_identical() {
        let records = synthetic_records(4, 0, 3, 25);
        let corpus = AugmentedCorpus {
            originals: records.clone(),
            augmented: Vec::new(),
        };
        let folds = make_folds(&records, 5, 7).unwrap();
        let table = PromptTable::asap();
        let run = || {
            train_eval_fold(
                &folds[2],
                &corpus,
                table.spec(4).unwrap(),
                &tiny_settings(),
                5,
                123,
                "ori",
                false,
            )
            .unwrap()
            .0
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn experiment_runs_two_conditions_and_renders_tables() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("corpus.jsonl");
        let records = synthetic_records(3, 0, 3, 20);
        write_corpus(&corpus_path, &records).unwrap();
        let bt_path = dir.path().join("bt.jsonl");
        let translations: Vec<BackTranslationRecord> = records
            .iter()
            .map(|r| BackTranslationRecord {
                essay_id: r.essay_id,
                pivot: "zh".into(),
                text: r.text.clone(),
                backend: "identity".into(),
                ts: 0,
            })
            .collect();
        write_augmentation_set(&bt_path, &translations).unwrap();

        let output_dir = dir.path().join("results");
        let config = ExperimentConfig {
            corpus: corpus_path,
            prompts: vec![3],
            conditions: vec![
                Condition::originals_only("ori"),
                Condition {
                    name: "ori+zh".into(),
                    augmentation: AugmentationSource::Files {
                        paths: vec![bt_path],
                    },
                    plan: None,
                },
            ],
            model: tiny_settings(),
            epochs_original: 4,
            epochs_augmented: 2,
            k_folds: 5,
            seed: 5,
            output_dir: output_dir.clone(),
            workers: 2,
            ..ExperimentConfig::default()
        };
        let train_report = run_experiment(&config).unwrap();
        assert_eq!(train_report.cells.len(), 2);
        assert_eq!(train_report.improvements.len(), 1);
        // Epoch budgets: 4 for originals, 2 for augmented.
        for fold in 0..5 {
            let path = report::fold_result_path(&output_dir, 3, "ori", fold, false);
            let fold_report: FoldReport =
                serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
            assert_eq!(fold_report.epochs_run, 4);
            let path = report::fold_result_path(&output_dir, 3, "ori+zh", fold, false);
            let fold_report: FoldReport =
                serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
            assert_eq!(fold_report.epochs_run, 2);
        }
        let text = std::fs::read_to_string(output_dir.join("summary.txt")).unwrap();
        assert!(text.contains("ori+zh"));
        let reloaded = load_results_dir(&output_dir, Some("ori")).unwrap();
        assert_eq!(
            serde_json::to_string(&reloaded.cells).unwrap(),
            serde_json::to_string(&train_report.cells).unwrap()
        );
    }

    #[test]
    fn experiment_reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("corpus.jsonl");
        write_corpus(&corpus_path, &synthetic_records(3, 0, 3, 15)).unwrap();
        let run = |out: &std::path::Path| {
            let config = ExperimentConfig {
                corpus: corpus_path.clone(),
                prompts: vec![3],
                conditions: vec![Condition::originals_only("ori")],
                model: tiny_settings(),
                epochs_original: 3,
                k_folds: 5,
                seed: 77,
                output_dir: out.to_path_buf(),
                workers: 3,
                ..ExperimentConfig::default()
            };
            run_experiment(&config).unwrap();
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        run(&out_a);
        run(&out_b);
        for file in ["summary.json", "summary.csv", "summary.txt"] {
            let a = std::fs::read(out_a.join(file)).unwrap();
            let b = std::fs::read(out_b.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs across reruns");
        }
        for fold in 0..5 {
            let rel = format!("3/ori/fold{fold}.json");
            let a = std::fs::read(out_a.join(&rel)).unwrap();
            let b = std::fs::read(out_b.join(&rel)).unwrap();
            assert_eq!(a, b, "{rel} differs across reruns");
        }
    }

    #[test]
    fn failed_folds_are_persisted_with_markers_and_propagated() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("corpus.jsonl");
        let records = synthetic_records(3, 0, 3, 5);
        write_corpus(&corpus_path, &records).unwrap();
        // Hand-built partitions: fold 0 has an empty dev set, which aborts
        // that fold; fold 1 is fine.
        let partitions = dir.path().join("folds.json");
        std::fs::write(
            &partitions,
            r#"{
                "0": {"train": [3, 4, 5], "dev": [], "test": [1, 2]},
                "1": {"train": [2], "dev": [1], "test": [3, 4, 5]}
            }"#,
        )
        .unwrap();
        let output_dir = dir.path().join("results");
        let config = ExperimentConfig {
            corpus: corpus_path,
            prompts: vec![3],
            conditions: vec![Condition::originals_only("ori")],
            model: tiny_settings(),
            epochs_original: 2,
            partitions: Some(partitions),
            output_dir: output_dir.clone(),
            ..ExperimentConfig::default()
        };
        let err = run_experiment(&config).unwrap_err();
        assert!(matches!(err, HarnessError::FoldsFailed { failed: 1, total: 2 }));
        assert!(output_dir.join("3/ori/fold0.failed.json").exists());
        assert!(output_dir.join("3/ori/fold1.json").exists());
        let summary = std::fs::read_to_string(output_dir.join("summary.txt")).unwrap();
        assert!(summary.contains("FAILED prompt 3"), "{summary}");
    }

    #[test]
    fn empty_prompt_selection_fails_validation() {
        let config = ExperimentConfig {
            prompts: vec![],
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_experiment(&config),
            Err(HarnessError::BadConfig { .. })
        ));
    }
}
