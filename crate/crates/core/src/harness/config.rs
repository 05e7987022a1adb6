//! Experiment configuration: one JSON document, every field overridable from
//! the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjust::ThresholdMode;
use crate::backtranslate::HttpBackendConfig;
use crate::corpus::ColumnMap;
use crate::features::Banding;
use crate::model::{AdamHyper, CellType};

use super::HarnessError;

/// Scorer hyperparameters shared by every fold of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub cell_type: CellType,
    pub cell_size: usize,
    pub embed_dim: usize,
    pub use_content_features: bool,
    pub max_seq_len: usize,
    pub min_count: u64,
    /// Distribution smoothing; defaults to 1/|V| when absent.
    pub alpha: Option<f64>,
    pub freeze_embeddings: bool,
    /// Pre-trained embedding file; random initialization when absent.
    pub embeddings: Option<PathBuf>,
    pub banding: Banding,
    pub batch_size: usize,
    pub adam: AdamHyper,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            cell_type: CellType::Gru,
            cell_size: 300,
            embed_dim: 100,
            use_content_features: false,
            max_seq_len: 500,
            min_count: 1,
            alpha: None,
            freeze_embeddings: false,
            embeddings: None,
            banding: Banding::EqualWidth,
            batch_size: 32,
            adam: AdamHyper::default(),
        }
    }
}

/// Where a condition's back-translations come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationSource {
    None,
    Files { paths: Vec<PathBuf> },
    Live {
        pivot: String,
        backend: HttpBackendConfig,
        cache: Option<PathBuf>,
    },
}

impl AugmentationSource {
    pub fn is_none(&self) -> bool {
        matches!(self, AugmentationSource::None)
    }
}

/// One data condition of the experiment, e.g. originals only, or originals
/// plus a pivot's back-translations under a named rule plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub augmentation: AugmentationSource,
    /// Built-in plan name or path to a plan file; identity when absent.
    #[serde(default)]
    pub plan: Option<String>,
}

impl Condition {
    pub fn originals_only(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            augmentation: AugmentationSource::None,
            plan: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub columns: ColumnMap,
    pub prompts: Vec<u32>,
    pub conditions: Vec<Condition>,
    pub model: ModelSettings,
    pub epochs_original: usize,
    pub epochs_augmented: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// External partition file; folds are generated when absent.
    pub partitions: Option<PathBuf>,
    /// Evaluate dev on original essays only instead of the augmented dev set.
    pub dev_original_only: bool,
    /// Pin built-in plan thresholds to the published constants.
    pub strict_thresholds: bool,
    pub workers: usize,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            columns: ColumnMap::default(),
            prompts: Vec::new(),
            conditions: vec![Condition::originals_only("ori")],
            model: ModelSettings::default(),
            epochs_original: 50,
            epochs_augmented: 30,
            k_folds: 5,
            seed: 42,
            output_dir: PathBuf::from("results"),
            partitions: None,
            dev_original_only: false,
            strict_thresholds: false,
            workers: 1,
            save_checkpoints: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|e| HarnessError::BadConfig {
            message: format!("{}: {e}", path.display()),
        })?;
        Ok(config)
    }

    pub fn threshold_mode(&self) -> ThresholdMode {
        if self.strict_thresholds {
            ThresholdMode::PaperConstants
        } else {
            ThresholdMode::Observed
        }
    }

    pub fn epochs_for(&self, condition: &Condition) -> usize {
        if condition.augmentation.is_none() {
            self.epochs_original
        } else {
            self.epochs_augmented
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |message: String| Err(HarnessError::BadConfig { message });
        if self.prompts.is_empty() {
            return fail("prompt selection is empty".into());
        }
        if self.conditions.is_empty() {
            return fail("no conditions configured".into());
        }
        if self.epochs_original == 0 || self.epochs_augmented == 0 {
            return fail("epoch budgets must be at least 1".into());
        }
        if self.k_folds < 2 {
            return fail(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if self.model.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !self.corpus.exists() {
            return fail(format!("corpus file {} does not exist", self.corpus.display()));
        }
        if let Some(partitions) = &self.partitions {
            if !partitions.exists() {
                return fail(format!("partition file {} does not exist", partitions.display()));
            }
        }
        if let Some(embeddings) = &self.model.embeddings {
            if !embeddings.exists() {
                return fail(format!(
                    "embedding file {} does not exist",
                    embeddings.display()
                ));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for condition in &self.conditions {
            if !seen.insert(condition.name.as_str()) {
                return fail(format!("duplicate condition name '{}'", condition.name));
            }
            if let AugmentationSource::Files { paths } = &condition.augmentation {
                if paths.is_empty() {
                    return fail(format!("condition '{}' lists no files", condition.name));
                }
                for path in paths {
                    if !path.exists() {
                        return fail(format!(
                            "augmentation file {} does not exist",
                            path.display()
                        ));
                    }
                }
            }
            if let Some(plan) = &condition.plan {
                let looks_like_path = plan.contains('/') || plan.ends_with(".json");
                if looks_like_path && !Path::new(plan).exists() {
                    return fail(format!("plan file {plan} does not exist"));
                }
            }
        }
        Ok(())
    }
}
