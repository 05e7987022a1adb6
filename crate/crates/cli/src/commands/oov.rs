use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use esscore::textprep::{build_vocab, load_embeddings, tokenize, TokenSequence};

use super::load_filtered;

#[derive(Args)]
pub struct OovArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub prompts: Option<String>,
    /// Embedding file: `token v1 .. vd` per line
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
}

pub fn run(args: OovArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    let tokenized: Vec<(u32, TokenSequence)> = records
        .iter()
        .map(|r| (r.prompt_id, tokenize(r.essay_id, &r.text)))
        .collect();
    let sequences: Vec<TokenSequence> = tokenized.iter().map(|(_, s)| s.clone()).collect();
    let vocab = build_vocab(&sequences, args.min_count)?;
    let (_, report) = load_embeddings(&args.embeddings, &vocab, args.dim)
        .with_context(|| format!("loading embeddings {}", args.embeddings.display()))?;

    let refs: Vec<(u32, &TokenSequence)> = tokenized.iter().map(|(p, s)| (*p, s)).collect();
    let per_prompt = report.per_prompt_oov(&refs);
    println!("{:<7} {:>16}", "Prompt", "UndefinedWords");
    for (prompt, count) in &per_prompt {
        println!("{prompt:<7} {count:>16}");
    }
    println!(
        "vocabulary: {} tokens, {} with pre-trained vectors, {} without",
        vocab.len(),
        report.matched,
        report.missing.len()
    );
    Ok(())
}
