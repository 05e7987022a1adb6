use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use esscore::adjust::{augment_corpus, RulePlan, ThresholdMode};
use esscore::backtranslate::load_precomputed;
use esscore::corpus::{compute_all_stats, PromptTable};
use serde::Serialize;

use super::load_filtered;

#[derive(Args)]
pub struct AdjustArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub prompts: Option<String>,
    /// Augmentation-set files (repeat for several pivots)
    #[arg(long, required = true)]
    pub bt: Vec<PathBuf>,
    /// Built-in plan name (identity-all, eq4, eq4+eq5, eq2-all(N),
    /// eq3-all(N)) or a plan file path
    #[arg(long, default_value = "identity-all")]
    pub plan: String,
    /// Pin built-in thresholds to the published constants (16, 40)
    #[arg(long)]
    pub strict_thresholds: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AugmentedLine<'a> {
    essay_id: u64,
    prompt_id: u32,
    text: &'a str,
    score: i64,
    source_essay_id: u64,
    pivot: &'a str,
    rule: &'a str,
}

pub fn run(args: AdjustArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    let table = PromptTable::asap();
    let stats = compute_all_stats(&records);
    let prompts: Vec<u32> = stats.keys().copied().collect();

    let plan = if args.plan.contains('/') || args.plan.ends_with(".json") {
        RulePlan::from_file(&args.plan, &table)?
    } else {
        let mode = if args.strict_thresholds {
            ThresholdMode::PaperConstants
        } else {
            ThresholdMode::Observed
        };
        RulePlan::builtin(&args.plan, &prompts, &table, &stats, mode)?
    };

    let mut translations = Vec::new();
    for path in &args.bt {
        translations.extend(load_precomputed(path)?);
    }
    let known: std::collections::HashSet<u64> = records.iter().map(|r| r.essay_id).collect();
    let before = translations.len();
    translations.retain(|t| known.contains(&t.essay_id));
    if translations.len() < before {
        log::warn!(
            "dropped {} back-translations of essays outside the selection",
            before - translations.len()
        );
    }

    let corpus = augment_corpus(&records, &translations, &stats, &plan)?;
    let mut body = Vec::new();
    for essay in &corpus.augmented {
        let line = AugmentedLine {
            essay_id: essay.record.essay_id,
            prompt_id: essay.record.prompt_id,
            text: &essay.record.text,
            score: essay.record.score,
            source_essay_id: essay.source_id,
            pivot: &essay.pivot,
            rule: &essay.rule,
        };
        serde_json::to_writer(&mut body, &line)?;
        body.push(b'\n');
    }
    std::fs::write(&args.out, body).with_context(|| format!("writing {}", args.out.display()))?;

    println!(
        "plan '{}': {} augmented essays written to {}",
        plan.name,
        corpus.augmented.len(),
        args.out.display()
    );
    println!(
        "processed (non-identity rule matched): {}",
        corpus.processed_count()
    );
    println!("changed (score differs from source): {}", corpus.changed_count());
    for (rule, count) in corpus.rule_counts() {
        println!("  {rule}: {count}");
    }
    Ok(())
}
