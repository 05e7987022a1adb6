//! Pivot-language round trips through a pluggable translator backend, with
//! corpus chunking for upload limits, within-essay chunking under the
//! backend's character cap, a resumable translation cache, and placeholder
//! preservation checks.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::EssayRecord;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("rate limited{}", .retry_after.map(|d| format!(" (retry after {d:?})")).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("unsupported language pair {src}->{dst}")]
    UnsupportedPair { src: String, dst: String },
    #[error("backend failure: {0}")]
    Failed(String),
}

#[derive(Debug, Error)]
pub enum BackTranslateError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("chunk cap must be positive")]
    InvalidCap,
    #[error("requested {parts} parts for {records} records")]
    TooManyParts { parts: usize, records: usize },
    #[error("text cannot be chunked under cap {cap} without splitting a placeholder")]
    Unchunkable { cap: usize },
    #[error("backend '{backend}' failed after {attempts} attempts: {last}")]
    RetriesExhausted {
        backend: String,
        attempts: u32,
        last: BackendError,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("duplicate back-translation for essay {essay_id} via '{pivot}'")]
    Duplicate { essay_id: u64, pivot: String },
    #[error("back-translation references unknown essay_id {0}")]
    UnknownEssay(u64),
    #[error("augmentation set line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One pivot-language round trip, carrying provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackTranslationRecord {
    pub essay_id: u64,
    pub pivot: String,
    pub text: String,
    pub backend: String,
    pub ts: i64,
}

/// A translation service. `translate` must either return text or a typed
/// error for every supported pair.
pub trait TranslatorBackend: Send + Sync {
    fn id(&self) -> &str;
    /// Maximum characters accepted per request.
    fn max_chars(&self) -> usize;
    fn supports(&self, src: &str, dst: &str) -> bool;
    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String, BackendError>;
}

/// Echoes its input; useful for plumbing tests and dry runs.
pub struct IdentityBackend {
    pub cap: usize,
}

impl Default for IdentityBackend {
    fn default() -> Self {
        Self { cap: 5000 }
    }
}

impl TranslatorBackend for IdentityBackend {
    fn id(&self) -> &str {
        "identity"
    }

    fn max_chars(&self) -> usize {
        self.cap
    }

    fn supports(&self, _src: &str, _dst: &str) -> bool {
        true
    }

    fn translate(&self, text: &str, _src: &str, _dst: &str) -> Result<String, BackendError> {
        Ok(text.to_string())
    }
}

/// Retry schedule for backend calls: `attempts` tries with exponential
/// backoff starting at `base_delay`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests.
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }
}

fn cache_key(text: &str, src: &str, dst: &str, backend_id: &str) -> String {
    let normalized: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut hasher = Sha256::new();
    hasher.update(normalized.as_bytes());
    hasher.update([0]);
    hasher.update(src.as_bytes());
    hasher.update([0]);
    hasher.update(dst.as_bytes());
    hasher.update([0]);
    hasher.update(backend_id.as_bytes());
    format!("{:x}", hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
}

/// Chunk-level translation cache keyed by (normalized text, src, dst,
/// backend). Concurrent readers share the map; file appends are serialized
/// so interrupted runs can resume without re-billing.
pub struct TranslationCache {
    entries: RwLock<HashMap<String, String>>,
    file: Option<Mutex<fs::File>>,
}

impl TranslationCache {
    pub fn memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    /// Open (or create) a JSONL-backed cache file and load existing entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackTranslateError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|source| BackTranslateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let parsed: CacheLine = serde_json::from_str(line)?;
                entries.insert(parsed.key, parsed.text);
            }
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| BackTranslateError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    fn put(&self, key: String, text: String) {
        if let Some(file) = &self.file {
            let line = CacheLine {
                key: key.clone(),
                text: text.clone(),
            };
            let mut guard = file.lock().expect("cache file lock");
            if let Ok(serialized) = serde_json::to_string(&line) {
                let _ = writeln!(guard, "{serialized}");
            }
        }
        self.entries.write().expect("cache lock").insert(key, text);
    }
}

/// Split a corpus into `n_parts` contiguous parts whose sizes differ by at
/// most one; concatenating the parts restores the input order.
pub fn chunk_corpus(
    records: &[EssayRecord],
    n_parts: usize,
) -> Result<Vec<Vec<EssayRecord>>, BackTranslateError> {
    if n_parts == 0 || n_parts > records.len() {
        return Err(BackTranslateError::TooManyParts {
            parts: n_parts,
            records: records.len(),
        });
    }
    let base = records.len() / n_parts;
    let extra = records.len() % n_parts;
    let mut parts = Vec::with_capacity(n_parts);
    let mut offset = 0;
    for i in 0..n_parts {
        let size = base + usize::from(i < extra);
        parts.push(records[offset..offset + size].to_vec());
        offset += size;
    }
    Ok(parts)
}

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").expect("valid placeholder regex"))
}

/// Split `text` into pieces of at most `cap` characters whose concatenation
/// is exactly `text`. Splits prefer sentence boundaries, then whitespace,
/// and never land inside a `@`-placeholder.
pub fn chunk_text(text: &str, cap: usize) -> Result<Vec<String>, BackTranslateError> {
    if cap == 0 {
        return Err(BackTranslateError::InvalidCap);
    }
    let mut chunks = Vec::new();
    let mut rest = text;
    while rest.chars().count() > cap {
        let split = find_split(rest, cap)?;
        chunks.push(rest[..split].to_string());
        rest = &rest[split..];
    }
    if !rest.is_empty() {
        chunks.push(rest.to_string());
    }
    Ok(chunks)
}

/// Byte index of the best split point in `text`, at most `cap` characters in.
fn find_split(text: &str, cap: usize) -> Result<usize, BackTranslateError> {
    // Byte position just after the cap-th character.
    let limit = text
        .char_indices()
        .nth(cap)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let prefix = &text[..limit];

    // Sentence boundary: punctuation followed by one whitespace character;
    // split after the whitespace.
    static SENTENCE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let sentence = SENTENCE.get_or_init(|| Regex::new(r"[.!?]\s").expect("valid regex"));
    if let Some(best) = sentence.find_iter(prefix).map(|m| m.end()).last() {
        if best > 0 && best < text.len() {
            return Ok(best);
        }
    }
    // Whitespace fallback: split after the last whitespace character.
    if let Some((i, c)) = prefix
        .char_indices()
        .filter(|(_, c)| c.is_whitespace())
        .last()
    {
        let end = i + c.len_utf8();
        if end > 0 && end < text.len() {
            return Ok(end);
        }
    }
    // Hard split at the cap, backing off so no placeholder is cut.
    let spans: Vec<(usize, usize)> = placeholder_regex()
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect();
    let mut candidate = limit;
    while candidate > 0 {
        if !text.is_char_boundary(candidate) {
            candidate -= 1;
            continue;
        }
        let inside = spans
            .iter()
            .any(|&(start, end)| start < candidate && candidate < end);
        if !inside {
            return Ok(candidate);
        }
        candidate -= 1;
    }
    Err(BackTranslateError::Unchunkable { cap })
}

fn call_with_retry(
    backend: &dyn TranslatorBackend,
    policy: &RetryPolicy,
    text: &str,
    src: &str,
    dst: &str,
) -> Result<String, BackTranslateError> {
    let mut delay = policy.base_delay;
    let mut last = None;
    for attempt in 0..policy.attempts.max(1) {
        match backend.translate(text, src, dst) {
            Ok(out) => return Ok(out),
            Err(BackendError::UnsupportedPair { src, dst }) => {
                return Err(BackendError::UnsupportedPair { src, dst }.into());
            }
            Err(err) => {
                let wait = match &err {
                    BackendError::RateLimited {
                        retry_after: Some(d),
                    } => *d,
                    _ => delay,
                };
                last = Some(err);
                if attempt + 1 < policy.attempts.max(1) && !wait.is_zero() {
                    std::thread::sleep(wait);
                }
                delay = delay.saturating_mul(2);
            }
        }
    }
    Err(BackTranslateError::RetriesExhausted {
        backend: backend.id().to_string(),
        attempts: policy.attempts.max(1),
        last: last.unwrap_or(BackendError::Failed("no attempts made".into())),
    })
}

fn translate_text(
    backend: &dyn TranslatorBackend,
    cache: &TranslationCache,
    policy: &RetryPolicy,
    text: &str,
    src: &str,
    dst: &str,
) -> Result<String, BackTranslateError> {
    if !backend.supports(src, dst) {
        return Err(BackendError::UnsupportedPair {
            src: src.to_string(),
            dst: dst.to_string(),
        }
        .into());
    }
    let chunks = chunk_text(text, backend.max_chars())?;
    let mut out = String::with_capacity(text.len());
    for chunk in chunks {
        let key = cache_key(&chunk, src, dst, backend.id());
        match cache.get(&key) {
            Some(hit) => out.push_str(&hit),
            None => {
                let translated = call_with_retry(backend, policy, &chunk, src, dst)?;
                cache.put(key, translated.clone());
                out.push_str(&translated);
            }
        }
    }
    Ok(out)
}

fn now_epoch() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs() as i64
}

/// Round-trip one essay through `pivot`: English to pivot, pivot back to
/// English, chunk-wise under the backend's character cap.
pub fn back_translate(
    record: &EssayRecord,
    pivot: &str,
    backend: &dyn TranslatorBackend,
    cache: &TranslationCache,
    policy: &RetryPolicy,
) -> Result<BackTranslationRecord, BackTranslateError> {
    let forward = translate_text(backend, cache, policy, &record.text, "en", pivot)?;
    let back = translate_text(backend, cache, policy, &forward, pivot, "en")?;
    Ok(BackTranslationRecord {
        essay_id: record.essay_id,
        pivot: pivot.to_string(),
        text: back,
        backend: backend.id().to_string(),
        ts: now_epoch(),
    })
}

/// Back-translate a batch with up to `in_flight` concurrent backend calls.
/// Output is ordered by essay_id regardless of completion order.
pub fn run_backtranslation(
    records: &[EssayRecord],
    pivot: &str,
    backend: &dyn TranslatorBackend,
    cache: &TranslationCache,
    policy: &RetryPolicy,
    in_flight: usize,
) -> Result<Vec<BackTranslationRecord>, BackTranslateError> {
    let workers = in_flight.max(1).min(records.len().max(1));
    let cursor = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<BackTranslationRecord, BackTranslateError>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= records.len() {
                    break;
                }
                let outcome = back_translate(&records[i], pivot, backend, cache, policy);
                results.lock().expect("results lock")[i] = Some(outcome);
            });
        }
    });

    let mut out = Vec::with_capacity(records.len());
    for slot in results.into_inner().expect("results lock") {
        out.push(slot.expect("worker filled every slot")?);
    }
    out.sort_by_key(|r| r.essay_id);
    Ok(out)
}

/// Write an augmentation set as one JSON object per line.
pub fn write_augmentation_set(
    path: impl AsRef<Path>,
    records: &[BackTranslationRecord],
) -> Result<(), BackTranslateError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|source| BackTranslateError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load an augmentation set, rejecting duplicate (essay_id, pivot) pairs.
pub fn load_precomputed(
    path: impl AsRef<Path>,
) -> Result<Vec<BackTranslationRecord>, BackTranslateError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| BackTranslateError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: BackTranslationRecord =
            serde_json::from_str(line).map_err(|e| BackTranslateError::BadRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !seen.insert((record.essay_id, record.pivot.clone())) {
            return Err(BackTranslateError::Duplicate {
                essay_id: record.essay_id,
                pivot: record.pivot,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Check augmentation records against a corpus. Unknown essay ids either
/// fail (strict) or are returned for the caller to log.
pub fn validate_against_corpus(
    records: &[BackTranslationRecord],
    corpus: &[EssayRecord],
    strict: bool,
) -> Result<Vec<u64>, BackTranslateError> {
    let known: HashSet<u64> = corpus.iter().map(|r| r.essay_id).collect();
    let mut unknown = Vec::new();
    for record in records {
        if !known.contains(&record.essay_id) {
            if strict {
                return Err(BackTranslateError::UnknownEssay(record.essay_id));
            }
            unknown.push(record.essay_id);
        }
    }
    Ok(unknown)
}

/// Placeholder audit of one round trip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    /// Pairs (original, corrupted) whose case-folded forms match.
    pub mutated: Vec<(String, String)>,
}

impl PreservationReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.mutated.is_empty()
    }
}

fn placeholder_multiset(text: &str) -> HashMap<String, i64> {
    let mut counts = HashMap::new();
    for m in placeholder_regex().find_iter(text) {
        *counts.entry(m.as_str().to_string()).or_insert(0) += 1;
    }
    counts
}

/// Compare the multiset of `@`-placeholders before and after back-translation.
/// Missing/extra placeholders whose uppercase forms coincide are reported as
/// mutations (a translator that re-cased them) rather than as two defects.
pub fn verify_entity_preservation(
    original: &EssayRecord,
    bt: &BackTranslationRecord,
) -> PreservationReport {
    debug_assert_eq!(original.essay_id, bt.essay_id);
    let before = placeholder_multiset(&original.text);
    let after = placeholder_multiset(&bt.text);

    let mut missing: Vec<String> = Vec::new();
    let mut extra: Vec<String> = Vec::new();
    for (token, &count) in &before {
        let delta = count - after.get(token).copied().unwrap_or(0);
        for _ in 0..delta.max(0) {
            missing.push(token.clone());
        }
    }
    for (token, &count) in &after {
        let delta = count - before.get(token).copied().unwrap_or(0);
        for _ in 0..delta.max(0) {
            extra.push(token.clone());
        }
    }
    missing.sort();
    extra.sort();

    let mut mutated = Vec::new();
    let mut remaining_extra = extra;
    missing.retain(|m| {
        if let Some(pos) = remaining_extra
            .iter()
            .position(|e| e.to_uppercase() == m.to_uppercase())
        {
            mutated.push((m.clone(), remaining_extra.remove(pos)));
            false
        } else {
            true
        }
    });

    PreservationReport {
        missing,
        extra: remaining_extra,
        mutated,
    }
}

/// Live HTTP translator speaking the common `{"q", "source", "target"}`
/// JSON convention. The endpoint and auth token are configuration; requests
/// are paced to the configured rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token, if the service needs one.
    pub auth_token_env: Option<String>,
    pub max_chars: usize,
    pub requests_per_sec: f64,
    #[serde(default = "default_backend_id")]
    pub id: String,
}

fn default_backend_id() -> String {
    "http".to_string()
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            auth_token_env: None,
            max_chars: 4500,
            requests_per_sec: 1.0,
            id: default_backend_id(),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    token: Option<String>,
    agent: ureq::Agent,
    last_call: Mutex<Option<Instant>>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let token = config
            .auth_token_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        Self {
            config,
            token,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
            last_call: Mutex::new(None),
        }
    }

    fn pace(&self) {
        if self.config.requests_per_sec <= 0.0 {
            return;
        }
        let interval = Duration::from_secs_f64(1.0 / self.config.requests_per_sec);
        let mut guard = self.last_call.lock().expect("pace lock");
        if let Some(last) = *guard {
            let elapsed = last.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *guard = Some(Instant::now());
    }
}

#[derive(Deserialize)]
struct TranslateResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

impl TranslatorBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn max_chars(&self) -> usize {
        self.config.max_chars
    }

    fn supports(&self, src: &str, dst: &str) -> bool {
        !src.is_empty() && !dst.is_empty() && src != dst
    }

    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String, BackendError> {
        self.pace();
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.token {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        let body = serde_json::json!({
            "q": text,
            "source": src,
            "target": dst,
            "format": "text",
        });
        match request.send_json(body) {
            Ok(response) => response
                .into_json::<TranslateResponse>()
                .map(|r| r.translated_text)
                .map_err(|e| BackendError::Failed(format!("bad response body: {e}"))),
            Err(ureq::Error::Status(429, response)) => {
                let retry_after = response
                    .header("Retry-After")
                    .and_then(|v| v.parse::<u64>().ok())
                    .map(Duration::from_secs);
                Err(BackendError::RateLimited { retry_after })
            }
            Err(ureq::Error::Status(code, response)) => Err(BackendError::Failed(format!(
                "HTTP {code}: {}",
                response.into_string().unwrap_or_default()
            ))),
            Err(e) => Err(BackendError::Failed(e.to_string())),
        }
    }
}
