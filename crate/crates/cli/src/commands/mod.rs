pub mod adjust;
pub mod backtranslate;
pub mod folds;
pub mod ingest;
pub mod oov;
pub mod report;
pub mod stats;
pub mod train;

use anyhow::{Context, Result};
use esscore::corpus::{ColumnMap, EssayRecord, PromptTable};
use esscore::harness::load_corpus_auto;

/// Parse `--columns id,set,essay,score`.
pub fn parse_columns(spec: &Option<String>) -> Result<ColumnMap> {
    match spec {
        None => Ok(ColumnMap::default()),
        Some(raw) => {
            let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
            anyhow::ensure!(
                parts.len() == 4,
                "--columns needs four comma-separated names (essay id, prompt id, text, score), got {}",
                parts.len()
            );
            Ok(ColumnMap {
                essay_id: parts[0].to_string(),
                prompt_id: parts[1].to_string(),
                text: parts[2].to_string(),
                score: parts[3].to_string(),
            })
        }
    }
}

/// Parse `--prompts 1,2,3`; `None` means every prompt in the corpus.
pub fn parse_prompts(spec: &Option<String>) -> Result<Option<Vec<u32>>> {
    match spec {
        None => Ok(None),
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .with_context(|| format!("bad prompt id '{p}'"))
            })
            .collect::<Result<Vec<u32>>>()
            .map(Some),
    }
}

/// Load a corpus (TSV or JSONL) and optionally restrict it to a prompt set.
pub fn load_filtered(
    path: &std::path::Path,
    columns: &Option<String>,
    prompts: &Option<String>,
) -> Result<Vec<EssayRecord>> {
    let columns = parse_columns(columns)?;
    let selection = parse_prompts(prompts)?;
    let table = PromptTable::asap();
    let mut records = load_corpus_auto(path, &columns, &table)
        .with_context(|| format!("loading corpus {}", path.display()))?;
    if let Some(selection) = selection {
        records.retain(|r| selection.contains(&r.prompt_id));
        anyhow::ensure!(!records.is_empty(), "no records left after prompt filtering");
    }
    Ok(records)
}
