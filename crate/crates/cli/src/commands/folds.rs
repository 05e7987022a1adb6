use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use esscore::corpus::{make_folds, validate_partitions, write_partitions};

use super::load_filtered;

#[derive(Args)]
pub struct FoldsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub prompts: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: FoldsArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    let folds = make_folds(&records, args.k, args.seed)?;
    validate_partitions(&folds, &records)?;
    write_partitions(&args.out, &folds)?;
    println!(
        "{} folds over {} essays -> {}",
        folds.len(),
        records.len(),
        args.out.display()
    );
    Ok(())
}
