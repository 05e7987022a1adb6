//! Essay-scoring toolkit: corpus ingestion and statistics, back-translation
//! augmentation with score adjustment, content features, recurrent scorers
//! trained from scratch, and quadratic-weighted-kappa evaluation.

pub mod adjust;
pub mod backtranslate;
pub mod corpus;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod textprep;

pub use adjust::{AdjustmentRule, AugmentedCorpus, RulePlan};
pub use backtranslate::{BackTranslationRecord, TranslatorBackend};
pub use corpus::{EssayRecord, FoldAssignment, PromptSpec, PromptStats, PromptTable};
pub use features::{LevelPartition, WordDistribution};
pub use harness::{ExperimentConfig, TrainReport};
pub use metrics::qwk;
pub use model::{ModelConfig, Parameters};
pub use textprep::{TokenSequence, Vocabulary};
