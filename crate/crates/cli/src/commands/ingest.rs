use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use esscore::corpus::write_corpus;

use super::load_filtered;

#[derive(Args)]
pub struct IngestArgs {
    /// Corpus file (tab-separated release format or JSONL cache)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Column names: essay id, prompt id, text, score
    #[arg(long)]
    pub columns: Option<String>,
    /// Restrict to these prompt ids
    #[arg(long)]
    pub prompts: Option<String>,
    /// Where to write the normalized JSONL cache
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: IngestArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    write_corpus(&args.out, &records)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let prompts: std::collections::BTreeMap<u32, usize> =
        records.iter().fold(Default::default(), |mut acc, r| {
            *acc.entry(r.prompt_id).or_insert(0) += 1;
            acc
        });
    println!("{} essays across {} prompts -> {}", records.len(), prompts.len(), args.out.display());
    for (prompt, count) in prompts {
        println!("  prompt {prompt}: {count}");
    }
    Ok(())
}
