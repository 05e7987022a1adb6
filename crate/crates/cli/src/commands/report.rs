use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use esscore::harness::{load_results_dir, render_text, write_summaries};

#[derive(Args)]
pub struct ReportArgs {
    /// Results directory written by `train`
    #[arg(long)]
    pub results: PathBuf,
    /// Baseline condition for the improvement columns; inferred from the
    /// un-augmented condition when omitted
    #[arg(long)]
    pub baseline: Option<String>,
}

pub fn run(args: ReportArgs) -> Result<()> {
    let report = load_results_dir(&args.results, args.baseline.as_deref())?;
    write_summaries(&args.results, &report)?;
    print!("{}", render_text(&report));
    Ok(())
}
