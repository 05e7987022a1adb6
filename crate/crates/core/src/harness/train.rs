//! Per-fold training: epoch loop, dev-set model selection, test evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FoldAssignment, PromptSpec};
use crate::features::{
    content_features, default_alpha, partition_levels, word_distribution, LevelPartition,
};
use crate::metrics::qwk;
use crate::model::{
    adam_step, backward, forward, normalize_score, AdamState, Checkpoint, Example, ModelConfig,
    Parameters,
};
use crate::textprep::{load_embeddings, tokenize, TokenSequence, Vocabulary};

use super::config::ModelSettings;
use super::data::{materialize_fold, FoldData, TrainEssay};
use super::HarnessError;
use crate::adjust::AugmentedCorpus;

/// Outcome of one fold: the dev trajectory, the selected epoch, and the
/// test-set QWK of the selected model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub prompt_id: u32,
    pub condition: String,
    pub fold_index: usize,
    pub epochs_run: usize,
    pub dev_qwk: Vec<f64>,
    /// Earliest 1-based epoch achieving the best dev QWK.
    pub first_best_epoch: usize,
    pub test_qwk: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub augmented_in_train: usize,
    /// Wall clock is reporting-only; it is kept out of the serialized file
    /// so reruns with one seed stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Everything [`train_eval_fold`] derives from the training split before the
/// epoch loop starts: vocabulary, encoded examples, level distributions.
struct PreparedFold {
    config: ModelConfig,
    vocab: Vocabulary,
    levels: Option<LevelPartition>,
    train: Vec<Example>,
    dev: Vec<Example>,
    dev_actual: Vec<i64>,
    test: Vec<Example>,
    test_actual: Vec<i64>,
}

fn encode_essays(
    essays: &[(&crate::corpus::EssayRecord, &TokenSequence)],
    vocab: &Vocabulary,
    levels: Option<&LevelPartition>,
    alpha: f64,
    spec: &PromptSpec,
) -> Result<Vec<Example>, HarnessError> {
    essays
        .iter()
        .map(|(record, tokens)| {
            let content = match levels {
                Some(levels) => {
                    let dist = word_distribution(tokens, vocab, alpha)?;
                    Some(content_features(&dist, levels)?)
                }
                None => None,
            };
            Ok(Example {
                tokens: vocab.encode(tokens),
                content,
                target: normalize_score(record.score, spec)?.value,
            })
        })
        .collect()
}

fn prepare_fold(
    data: &FoldData,
    spec: &PromptSpec,
    settings: &ModelSettings,
    seed: u64,
) -> Result<PreparedFold, HarnessError> {
    let tokenized = |essays: &[TrainEssay]| -> Vec<TokenSequence> {
        essays
            .iter()
            .map(|e| tokenize(e.record.essay_id, &e.record.text))
            .collect()
    };
    let train_tokens = tokenized(&data.train);
    let dev_tokens = tokenized(&data.dev);
    let test_tokens: Vec<TokenSequence> = data
        .test
        .iter()
        .map(|r| tokenize(r.essay_id, &r.text))
        .collect();

    // Vocabulary, pooling divisor, and level distributions come from the
    // training split only.
    let vocab = build_train_vocab(&train_tokens, settings)?;
    let alpha = settings.alpha.unwrap_or_else(|| default_alpha(vocab.len()));
    let divisor = pooling_divisor(&train_tokens, settings.max_seq_len);

    let train_entries: Vec<(&crate::corpus::EssayRecord, &TokenSequence)> = data
        .train
        .iter()
        .map(|e| &e.record)
        .zip(&train_tokens)
        .collect();
    let levels = if settings.use_content_features {
        Some(partition_levels(
            &train_entries,
            spec,
            &vocab,
            alpha,
            settings.banding,
        )?)
    } else {
        None
    };

    let mut config = ModelConfig::new(settings.cell_type, vocab.len(), divisor);
    config.cell_size = settings.cell_size;
    config.embed_dim = settings.embed_dim;
    config.use_content_features = settings.use_content_features;
    // Degenerate partitions shrink the feature vector; the config records it.
    config.content_dim = levels.as_ref().map(|l| l.n_levels()).unwrap_or(3);
    config.max_seq_len = settings.max_seq_len;
    config.freeze_embeddings = settings.freeze_embeddings;
    config.prompt_id = spec.prompt_id;
    config.seed = seed;

    let dev_entries: Vec<(&crate::corpus::EssayRecord, &TokenSequence)> = data
        .dev
        .iter()
        .map(|e| &e.record)
        .zip(&dev_tokens)
        .collect();
    let test_entries: Vec<(&crate::corpus::EssayRecord, &TokenSequence)> =
        data.test.iter().zip(&test_tokens).collect();

    Ok(PreparedFold {
        train: encode_essays(&train_entries, &vocab, levels.as_ref(), alpha, spec)?,
        dev: encode_essays(&dev_entries, &vocab, levels.as_ref(), alpha, spec)?,
        dev_actual: data.dev.iter().map(|e| e.record.score).collect(),
        test: encode_essays(&test_entries, &vocab, levels.as_ref(), alpha, spec)?,
        test_actual: data.test.iter().map(|r| r.score).collect(),
        config,
        vocab,
        levels,
    })
}

fn build_train_vocab(
    train_tokens: &[TokenSequence],
    settings: &ModelSettings,
) -> Result<Vocabulary, HarnessError> {
    Ok(crate::textprep::build_vocab(train_tokens, settings.min_count)?)
}

/// Mean training-essay length in tokens, capped at the sequence limit.
fn pooling_divisor(train_tokens: &[TokenSequence], max_seq_len: usize) -> f64 {
    if train_tokens.is_empty() {
        return 1.0;
    }
    let total: usize = train_tokens
        .iter()
        .map(|t| t.len().min(max_seq_len))
        .sum();
    (total as f64 / train_tokens.len() as f64).max(1.0)
}

fn predict_scores(
    examples: &[Example],
    params: &Parameters,
    config: &ModelConfig,
    spec: &PromptSpec,
) -> Result<Vec<i64>, HarnessError> {
    examples
        .iter()
        .map(|example| {
            let score = forward(&example.tokens, example.content.as_deref(), params, config)?;
            Ok(crate::model::denormalize_score(score.value, spec)?)
        })
        .collect()
}

/// Train on one fold for `epochs` epochs (batch gradient steps, dev QWK
/// after every epoch), select the earliest best-dev checkpoint, and report
/// its test QWK.
pub fn train_eval_fold(
    fold: &FoldAssignment,
    corpus: &AugmentedCorpus,
    spec: &PromptSpec,
    settings: &ModelSettings,
    epochs: usize,
    seed: u64,
    condition: &str,
    dev_original_only: bool,
) -> Result<(FoldReport, Checkpoint), HarnessError> {
    let started = std::time::Instant::now();
    let data = materialize_fold(fold, corpus, spec.prompt_id, dev_original_only)?;
    if data.train.is_empty() || data.dev.is_empty() || data.test.is_empty() {
        return Err(HarnessError::BadConfig {
            message: format!(
                "fold {} leaves an empty split for prompt {} (train {}, dev {}, test {})",
                fold.fold_index,
                spec.prompt_id,
                data.train.len(),
                data.dev.len(),
                data.test.len()
            ),
        });
    }
    let prepared = prepare_fold(&data, spec, settings, seed)?;

    let mut params = match &settings.embeddings {
        Some(path) => {
            let (matrix, report) = load_embeddings(path, &prepared.vocab, settings.embed_dim)?;
            log::info!(
                "prompt {} fold {}: {} vocabulary tokens without pre-trained vectors",
                spec.prompt_id,
                fold.fold_index,
                report.missing.len()
            );
            Parameters::init_with_embeddings(&prepared.config, &matrix)?
        }
        None => Parameters::init(&prepared.config)?,
    };
    let mut adam = AdamState::new(&params);

    // Length-bucketed batches: stable order, shuffled per epoch.
    let mut order: Vec<usize> = (0..prepared.train.len()).collect();
    order.sort_by_key(|&i| (prepared.train[i].tokens.len(), i));
    let batches: Vec<Vec<usize>> = order
        .chunks(settings.batch_size)
        .map(|c| c.to_vec())
        .collect();
    let mut batch_order: Vec<usize> = (0..batches.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c_0000_0001);

    let mut dev_qwk = Vec::with_capacity(epochs);
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut scratch: Vec<Example> = Vec::new();

    for epoch in 1..=epochs {
        batch_order.shuffle(&mut rng);
        for &b in &batch_order {
            scratch.clear();
            scratch.extend(batches[b].iter().map(|&i| prepared.train[i].clone()));
            let (batch_loss, grads) =
                backward(&scratch, &params, &prepared.config).map_err(|source| {
                    HarnessError::FoldAborted {
                        prompt_id: spec.prompt_id,
                        fold: fold.fold_index,
                        epoch,
                        message: source.to_string(),
                    }
                })?;
            if !batch_loss.is_finite() {
                return Err(HarnessError::FoldAborted {
                    prompt_id: spec.prompt_id,
                    fold: fold.fold_index,
                    epoch,
                    message: format!("non-finite loss {batch_loss}"),
                });
            }
            adam_step(&mut params, &grads, &mut adam, &settings.adam).map_err(|source| {
                HarnessError::FoldAborted {
                    prompt_id: spec.prompt_id,
                    fold: fold.fold_index,
                    epoch,
                    message: source.to_string(),
                }
            })?;
        }
        let predicted = predict_scores(&prepared.dev, &params, &prepared.config, spec)?;
        let kappa = qwk(
            &predicted,
            &prepared.dev_actual,
            spec.min_score,
            spec.max_score,
        )?;
        dev_qwk.push(kappa.value);
        if kappa.value > best {
            best = kappa.value;
            best_epoch = epoch;
            best_params = params.clone();
        }
    }

    let predicted = predict_scores(&prepared.test, &best_params, &prepared.config, spec)?;
    let test_kappa = qwk(
        &predicted,
        &prepared.test_actual,
        spec.min_score,
        spec.max_score,
    )?;

    let mut checkpoint = Checkpoint::new(
        prepared.config.clone(),
        best_params,
        prepared.vocab.digest(),
    );
    checkpoint.adam = Some(adam);
    checkpoint.levels = prepared.levels.clone();

    Ok((
        FoldReport {
            prompt_id: spec.prompt_id,
            condition: condition.to_string(),
            fold_index: fold.fold_index,
            epochs_run: epochs,
            dev_qwk,
            first_best_epoch: best_epoch,
            test_qwk: test_kappa.value,
            train_size: prepared.train.len(),
            dev_size: prepared.dev.len(),
            test_size: prepared.test.len(),
            augmented_in_train: data.augmented_in_train(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        checkpoint,
    ))
}
