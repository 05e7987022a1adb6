use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use esscore::corpus::{compute_stats, PromptTable};

use super::load_filtered;

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub prompts: Option<String>,
    /// Emit one JSON object per prompt instead of the table
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: StatsArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    let table = PromptTable::asap();
    let prompts: BTreeSet<u32> = records.iter().map(|r| r.prompt_id).collect();
    if !args.json {
        println!(
            "{:<7} {:>7} {:>8} {:>5} {:>7} {:>7} {:>7}",
            "Prompt", "Essays", "Range", "HFS", "Lower", "Higher", "AtMode"
        );
    }
    for prompt_id in prompts {
        let stats = compute_stats(&records, prompt_id)?;
        let spec = table.spec(prompt_id)?;
        if args.json {
            println!("{}", serde_json::to_string(&stats)?);
        } else {
            println!(
                "{:<7} {:>7} {:>8} {:>5} {:>7} {:>7} {:>7}",
                prompt_id,
                stats.total(),
                format!("{}-{}", spec.min_score, spec.max_score),
                stats.highest_frequency_score,
                stats.n_lower,
                stats.n_higher,
                stats.n_at_mode()
            );
        }
    }
    Ok(())
}
