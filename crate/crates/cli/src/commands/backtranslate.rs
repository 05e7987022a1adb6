use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use esscore::backtranslate::{
    chunk_corpus, load_precomputed, run_backtranslation, validate_against_corpus,
    verify_entity_preservation, write_augmentation_set, HttpBackend, HttpBackendConfig,
    IdentityBackend, RetryPolicy, TranslationCache, TranslatorBackend,
};

use super::load_filtered;

#[derive(Subcommand)]
pub enum BacktranslateCmd {
    /// Round-trip essays through a pivot language
    Generate(GenerateArgs),
    /// Validate an externally produced augmentation set against a corpus
    Import(ImportArgs),
    /// Check placeholder preservation of an augmentation set
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub prompts: Option<String>,
    /// Pivot language code, e.g. zh or fr
    #[arg(long)]
    pub pivot: String,
    /// `identity` (dry runs) or `http`
    #[arg(long, default_value = "identity")]
    pub backend: String,
    /// Translation endpoint for the http backend
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token
    #[arg(long)]
    pub auth_env: Option<String>,
    #[arg(long, default_value_t = 4500)]
    pub max_chars: usize,
    /// Requests per second cap for the http backend
    #[arg(long, default_value_t = 1.0)]
    pub rps: f64,
    /// JSONL translation cache, reused across interrupted runs
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Split the corpus into this many equal parts before translating
    #[arg(long)]
    pub parts: Option<usize>,
    /// Which part to translate (0-based, with --parts)
    #[arg(long, default_value_t = 0)]
    pub part: usize,
    #[arg(long, default_value_t = 4)]
    pub in_flight: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(cmd: BacktranslateCmd) -> Result<()> {
    match cmd {
        BacktranslateCmd::Generate(args) => generate(args),
        BacktranslateCmd::Import(args) => import(args),
        BacktranslateCmd::Verify(args) => verify(args),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut records = load_filtered(&args.corpus, &args.columns, &args.prompts)?;
    if let Some(parts) = args.parts {
        let chunks = chunk_corpus(&records, parts)?;
        anyhow::ensure!(
            args.part < chunks.len(),
            "--part {} out of range for {} parts",
            args.part,
            parts
        );
        records = chunks[args.part].clone();
    }
    let backend: Box<dyn TranslatorBackend> = match args.backend.as_str() {
        "identity" => Box::new(IdentityBackend {
            cap: args.max_chars,
        }),
        "http" => {
            let endpoint = args
                .endpoint
                .clone()
                .context("--endpoint is required for the http backend")?;
            Box::new(HttpBackend::new(HttpBackendConfig {
                endpoint,
                auth_token_env: args.auth_env.clone(),
                max_chars: args.max_chars,
                requests_per_sec: args.rps,
                ..HttpBackendConfig::default()
            }))
        }
        other => anyhow::bail!("unknown backend '{other}' (expected identity or http)"),
    };
    let cache = match &args.cache {
        Some(path) => TranslationCache::open(path)?,
        None => TranslationCache::memory(),
    };
    let translations = run_backtranslation(
        &records,
        &args.pivot,
        backend.as_ref(),
        &cache,
        &RetryPolicy::default(),
        args.in_flight,
    )?;
    write_augmentation_set(&args.out, &translations)?;
    println!(
        "{} back-translations via '{}' -> {}",
        translations.len(),
        args.pivot,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct ImportArgs {
    /// Augmentation-set file to validate
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    /// Fail on back-translations of unknown essays instead of warning
    #[arg(long)]
    pub strict: bool,
    /// Re-emit the validated records here
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn import(args: ImportArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &None)?;
    let translations = load_precomputed(&args.file)?;
    let unknown = validate_against_corpus(&translations, &records, args.strict)?;
    for essay_id in &unknown {
        log::warn!("back-translation of unknown essay {essay_id}");
    }
    println!(
        "{} records, {} referencing unknown essays",
        translations.len(),
        unknown.len()
    );
    if let Some(out) = &args.out {
        write_augmentation_set(out, &translations)?;
        println!("copied to {}", out.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub columns: Option<String>,
    /// Augmentation-set file to audit
    #[arg(long)]
    pub bt: PathBuf,
}

fn verify(args: VerifyArgs) -> Result<()> {
    let records = load_filtered(&args.corpus, &args.columns, &None)?;
    let by_id: std::collections::HashMap<u64, &esscore::corpus::EssayRecord> =
        records.iter().map(|r| (r.essay_id, r)).collect();
    let translations = load_precomputed(&args.bt)?;
    let mut clean = 0usize;
    let mut dirty = 0usize;
    for bt in &translations {
        let Some(original) = by_id.get(&bt.essay_id) else {
            log::warn!("skipping back-translation of unknown essay {}", bt.essay_id);
            continue;
        };
        let report = verify_entity_preservation(original, bt);
        if report.is_clean() {
            clean += 1;
        } else {
            dirty += 1;
            println!(
                "essay {} via {}: {} missing, {} extra, {} mutated",
                bt.essay_id,
                bt.pivot,
                report.missing.len(),
                report.extra.len(),
                report.mutated.len()
            );
        }
    }
    println!("{clean} clean, {dirty} with placeholder damage");
    Ok(())
}
