//! Result aggregation and rendering: per-fold JSON documents, a CSV summary,
//! and a plain-text table with QWK displayed ×100 to one decimal place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::FoldReport;
use super::HarnessError;

/// Mean results of one (prompt, condition) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub prompt_id: u32,
    pub condition: String,
    pub folds: usize,
    pub mean_test_qwk: f64,
    pub mean_first_best_epoch: f64,
    pub failed_folds: usize,
}

/// A condition's average improvement over the baseline, under both divisor
/// conventions: the fixed eight-prompt divisor of the published tables, and
/// the measured-prompt count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Improvement {
    pub condition: String,
    /// Sum over measured prompts of (condition − baseline), on the ×100 scale.
    pub summed_delta_x100: f64,
    pub prompts_measured: usize,
    pub divided_by_8: f64,
    pub divided_by_measured: f64,
}

/// Aggregate experiment outcome.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub cells: Vec<CellSummary>,
    pub improvements: Vec<Improvement>,
    /// (prompt, condition, fold, error) for folds that did not finish.
    pub failures: Vec<(u32, String, usize, String)>,
}

pub(super) fn qwk_x100(value: f64) -> f64 {
    value * 100.0
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Average the per-prompt improvement of each non-baseline condition over
/// the baseline, dividing by both eight and the measured prompt count.
pub fn compute_improvements(
    cells: &[CellSummary],
    baseline: &str,
) -> Vec<Improvement> {
    let mut base: BTreeMap<u32, f64> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.condition == baseline) {
        base.insert(cell.prompt_id, cell.mean_test_qwk);
    }
    let mut conditions: Vec<&str> = Vec::new();
    for cell in cells {
        if cell.condition != baseline && !conditions.contains(&cell.condition.as_str()) {
            conditions.push(&cell.condition);
        }
    }
    conditions
        .into_iter()
        .map(|condition| {
            let mut summed = 0.0;
            let mut measured = 0;
            for cell in cells.iter().filter(|c| c.condition == condition) {
                if let Some(&baseline_qwk) = base.get(&cell.prompt_id) {
                    summed += qwk_x100(cell.mean_test_qwk) - qwk_x100(baseline_qwk);
                    measured += 1;
                }
            }
            Improvement {
                condition: condition.to_string(),
                summed_delta_x100: summed,
                prompts_measured: measured,
                divided_by_8: summed / 8.0,
                divided_by_measured: if measured > 0 {
                    summed / measured as f64
                } else {
                    f64::NAN
                },
            }
        })
        .collect()
}

/// Build the aggregate report from fold reports and recorded failures.
pub fn aggregate(
    fold_reports: &[FoldReport],
    failures: &[(u32, String, usize, String)],
    baseline: Option<&str>,
) -> TrainReport {
    let mut keys: Vec<(u32, String)> = Vec::new();
    for report in fold_reports {
        let key = (report.prompt_id, report.condition.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let cells: Vec<CellSummary> = keys
        .into_iter()
        .map(|(prompt_id, condition)| {
            let of_cell: Vec<&FoldReport> = fold_reports
                .iter()
                .filter(|r| r.prompt_id == prompt_id && r.condition == condition)
                .collect();
            let failed = failures
                .iter()
                .filter(|(p, c, _, _)| *p == prompt_id && *c == condition)
                .count();
            CellSummary {
                prompt_id,
                condition,
                folds: of_cell.len(),
                mean_test_qwk: mean(of_cell.iter().map(|r| r.test_qwk)),
                mean_first_best_epoch: mean(of_cell.iter().map(|r| r.first_best_epoch as f64)),
                failed_folds: failed,
            }
        })
        .collect();
    let improvements = baseline
        .map(|name| compute_improvements(&cells, name))
        .unwrap_or_default();
    TrainReport {
        cells,
        improvements,
        failures: failures.to_vec(),
    }
}

/// File-system-safe condition directory name.
pub(super) fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '+' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub(super) fn fold_result_path(
    output_dir: &Path,
    prompt_id: u32,
    condition: &str,
    fold: usize,
    failed: bool,
) -> PathBuf {
    let suffix = if failed { "failed.json" } else { "json" };
    output_dir
        .join(prompt_id.to_string())
        .join(sanitize(condition))
        .join(format!("fold{fold}.{suffix}"))
}

pub(super) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let body = serde_json::to_string_pretty(value).map_err(HarnessError::Json)?;
    fs::write(path, body).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Render `summary.txt`: one row per (prompt, condition) plus the
/// improvement block.
pub fn render_text(report: &TrainReport) -> String {
    let mut out = String::new();
    let width = report
        .cells
        .iter()
        .map(|c| c.condition.len())
        .chain(["Condition".len()])
        .max()
        .unwrap_or(9);
    out.push_str(&format!(
        "{:<7} {:<width$} {:>7} {:>10} {:>6} {:>7}\n",
        "Prompt", "Condition", "QWK", "FirstBest", "Folds", "Failed"
    ));
    for cell in &report.cells {
        out.push_str(&format!(
            "{:<7} {:<width$} {:>7.1} {:>10.1} {:>6} {:>7}\n",
            cell.prompt_id,
            cell.condition,
            qwk_x100(cell.mean_test_qwk),
            cell.mean_first_best_epoch,
            cell.folds,
            cell.failed_folds
        ));
    }
    if !report.improvements.is_empty() {
        out.push('\n');
        out.push_str("Average improvement over baseline (QWK x100):\n");
        for imp in &report.improvements {
            out.push_str(&format!(
                "  {:<width$} {:>6.2} (sum/8)   {:>6.2} (sum/{} measured)\n",
                imp.condition, imp.divided_by_8, imp.divided_by_measured, imp.prompts_measured
            ));
        }
    }
    if !report.failures.is_empty() {
        out.push('\n');
        for (prompt, condition, fold, message) in &report.failures {
            out.push_str(&format!(
                "FAILED prompt {prompt} condition {condition} fold {fold}: {message}\n"
            ));
        }
    }
    out
}

/// Render `summary.csv` with one row per (prompt, condition).
pub fn render_csv(report: &TrainReport) -> String {
    let mut out = String::from(
        "prompt,condition,mean_test_qwk_x100,mean_first_best_epoch,folds,failed_folds\n",
    );
    for cell in &report.cells {
        out.push_str(&format!(
            "{},{},{:.1},{:.1},{},{}\n",
            cell.prompt_id,
            cell.condition.replace(',', ";"),
            qwk_x100(cell.mean_test_qwk),
            cell.mean_first_best_epoch,
            cell.folds,
            cell.failed_folds
        ));
    }
    out
}

pub fn write_summaries(output_dir: &Path, report: &TrainReport) -> Result<(), HarnessError> {
    write_json(&output_dir.join("summary.json"), report)?;
    let io = |path: &Path, body: String| -> Result<(), HarnessError> {
        fs::write(path, body).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    io(&output_dir.join("summary.txt"), render_text(report))?;
    io(&output_dir.join("summary.csv"), render_csv(report))
}

/// Rebuild a [`TrainReport`] by scanning a results directory, so tables can
/// be re-rendered without retraining. The baseline, when present, is the
/// condition named in `baseline` or the lexicographically first one whose
/// fold reports show no augmented essays.
pub fn load_results_dir(
    output_dir: &Path,
    baseline: Option<&str>,
) -> Result<TrainReport, HarnessError> {
    let mut fold_reports: Vec<FoldReport> = Vec::new();
    let mut failures: Vec<(u32, String, usize, String)> = Vec::new();
    let entries = fs::read_dir(output_dir).map_err(|source| HarnessError::Io {
        path: output_dir.display().to_string(),
        source,
    })?;
    let mut prompt_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().parse::<u32>().is_ok()))
        .collect();
    prompt_dirs.sort();
    for prompt_dir in prompt_dirs {
        let mut condition_dirs: Vec<PathBuf> = fs::read_dir(&prompt_dir)
            .map_err(|source| HarnessError::Io {
                path: prompt_dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        condition_dirs.sort();
        for condition_dir in condition_dirs {
            let mut files: Vec<PathBuf> = fs::read_dir(&condition_dir)
                .map_err(|source| HarnessError::Io {
                    path: condition_dir.display().to_string(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            files.sort();
            for file in files {
                let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
                if name.ends_with(".failed.json") {
                    let body = fs::read_to_string(&file).unwrap_or_default();
                    let prompt: u32 = prompt_dir
                        .file_name()
                        .unwrap_or_default()
                        .to_string_lossy()
                        .parse()
                        .unwrap_or(0);
                    let fold: usize = name
                        .trim_start_matches("fold")
                        .trim_end_matches(".failed.json")
                        .parse()
                        .unwrap_or(0);
                    let condition = condition_dir
                        .file_name()
                        .unwrap_or_default()
                        .to_string_lossy()
                        .into_owned();
                    failures.push((prompt, condition, fold, body.trim().to_string()));
                } else if name.starts_with("fold") && name.ends_with(".json") {
                    let body = fs::read_to_string(&file).map_err(|source| HarnessError::Io {
                        path: file.display().to_string(),
                        source,
                    })?;
                    fold_reports.push(serde_json::from_str(&body).map_err(HarnessError::Json)?);
                }
            }
        }
    }
    let inferred: Option<String> = baseline.map(str::to_string).or_else(|| {
        let mut candidates: Vec<&FoldReport> = fold_reports
            .iter()
            .filter(|r| r.augmented_in_train == 0)
            .collect();
        candidates.sort_by(|a, b| a.condition.cmp(&b.condition));
        candidates.first().map(|r| r.condition.clone())
    });
    Ok(aggregate(&fold_reports, &failures, inferred.as_deref()))
}
