use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use esscore::harness::{render_text, run_experiment, ExperimentConfig};
use esscore::model::CellType;

use super::parse_prompts;

/// Run a training experiment from a JSON config; every flag overrides the
/// corresponding config field.
#[derive(Args)]
pub struct TrainArgs {
    /// Experiment config file (JSON); flags below override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub prompts: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_original: Option<usize>,
    #[arg(long)]
    pub epochs_augmented: Option<usize>,
    #[arg(long)]
    pub k_folds: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub partitions: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_parser = parse_cell_type)]
    pub cell_type: Option<CellType>,
    #[arg(long)]
    pub cell_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub content_features: Option<bool>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub freeze_embeddings: Option<bool>,
    #[arg(long)]
    pub dev_original_only: Option<bool>,
    #[arg(long)]
    pub strict_thresholds: Option<bool>,
    #[arg(long)]
    pub save_checkpoints: Option<bool>,
}

fn parse_cell_type(raw: &str) -> Result<CellType, String> {
    match raw.to_lowercase().as_str() {
        "gru" => Ok(CellType::Gru),
        "lstm" => Ok(CellType::Lstm),
        other => Err(format!("unknown cell type '{other}' (expected gru or lstm)")),
    }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.corpus {
        config.corpus = v;
    }
    if let Some(prompts) = parse_prompts(&args.prompts)? {
        config.prompts = prompts;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs_original {
        config.epochs_original = v;
    }
    if let Some(v) = args.epochs_augmented {
        config.epochs_augmented = v;
    }
    if let Some(v) = args.k_folds {
        config.k_folds = v;
    }
    if let Some(v) = args.output {
        config.output_dir = v;
    }
    if let Some(v) = args.partitions {
        config.partitions = Some(v);
    }
    if let Some(v) = args.workers {
        config.workers = v;
    }
    if let Some(v) = args.cell_type {
        config.model.cell_type = v;
    }
    if let Some(v) = args.cell_size {
        config.model.cell_size = v;
    }
    if let Some(v) = args.embed_dim {
        config.model.embed_dim = v;
    }
    if let Some(v) = args.content_features {
        config.model.use_content_features = v;
    }
    if let Some(v) = args.max_seq_len {
        config.model.max_seq_len = v;
    }
    if let Some(v) = args.batch_size {
        config.model.batch_size = v;
    }
    if let Some(v) = args.min_count {
        config.model.min_count = v;
    }
    if let Some(v) = args.embeddings {
        config.model.embeddings = Some(v);
    }
    if let Some(v) = args.freeze_embeddings {
        config.model.freeze_embeddings = v;
    }
    if let Some(v) = args.dev_original_only {
        config.dev_original_only = v;
    }
    if let Some(v) = args.strict_thresholds {
        config.strict_thresholds = v;
    }
    if let Some(v) = args.save_checkpoints {
        config.save_checkpoints = v;
    }

    let report = run_experiment(&config)?;
    print!("{}", render_text(&report));
    println!("results written to {}", config.output_dir.display());
    Ok(())
}
