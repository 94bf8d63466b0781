//! Report emission: the table computations behind the paper-style outputs,
//! rendered as CSV or Markdown.
//!
//! Every cell is a pure function of the run store, so regenerating reports
//! always yields identical files.

use crate::dataset::{DatasetStats, ManualLabel};
use crate::judging::{self, Calibration};
use crate::metrics::{self, ChiSquareResult, MetricsError, TaskOutcome};
use crate::orchestrator::{derive_outcomes, AttemptRecord, RunStore};
use crate::prompting::{self, TemplateId};
use crate::TargetLanguage;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no overlap between labels and store attempt ids")]
    NoOverlap,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Md,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Md => "md",
        }
    }
}

/// A rendered table: name, header and stringified cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDoc {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_escape(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

impl TableDoc {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.iter().map(|h| csv_escape(h)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| csv_escape(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_md(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(
            out,
            "|{}|",
            self.header.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
        );
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Md => self.to_md(),
        }
    }
}

/// Rate cells carry 4 decimals.
fn fmt_rate(value: f64) -> String {
    format!("{value:.4}")
}

/// Calibration ratios render in the three-decimal style of the paper's
/// agreement table; undefined ratios are N/A, never 0.
fn fmt_calibration(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "N/A".to_string(),
    }
}

/// P-values switch to scientific notation below 1e-4.
fn fmt_p_value(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn significance_label(result: &ChiSquareResult) -> &'static str {
    if result.p_value < 0.001 {
        "Highly significant"
    } else if result.significant {
        "Significant"
    } else {
        "Not significant"
    }
}

/// One chi-square table row from (possibly injected) result values.
pub fn chi_square_row(
    language: TargetLanguage,
    provider: &str,
    result: &ChiSquareResult,
) -> Vec<String> {
    vec![
        language.prompt_name().to_uppercase(),
        provider.to_string(),
        format!("{:.2}", result.statistic),
        fmt_p_value(result.p_value),
        result.dof.to_string(),
        significance_label(result).to_string(),
    ]
}

/// All the tables a completed (or partial) run store can produce.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub accuracy_by_template: TableDoc,
    pub wf_rate: TableDoc,
    pub pass_at_k: TableDoc,
    pub chi_square: TableDoc,
    /// Degenerate contingency tables reported instead of rows.
    pub chi_square_notices: Vec<String>,
    pub token_estimate: TableDoc,
}

impl ReportBundle {
    pub fn tables(&self) -> [&TableDoc; 5] {
        [
            &self.accuracy_by_template,
            &self.wf_rate,
            &self.pass_at_k,
            &self.chi_square,
            &self.token_estimate,
        ]
    }
}

type GroupKey = (TargetLanguage, String, TemplateId);

/// Significance level for the template-effect test.
pub const CHI_SQUARE_ALPHA: f64 = 0.05;

/// Build every report table from a loaded store.
pub fn build_bundle(store: &RunStore) -> Result<ReportBundle, ReportError> {
    let outcomes = derive_outcomes(&store.records);

    // Outcomes grouped by (language, provider, template), deliveries and
    // domains pooled.
    let mut by_template: BTreeMap<GroupKey, Vec<TaskOutcome>> = BTreeMap::new();
    for derived in &outcomes {
        let key = (
            derived.cell.language,
            derived.cell.provider.clone(),
            derived.cell.template,
        );
        by_template.entry(key).or_default().push(derived.outcome.clone());
    }

    let mut accuracy_rows = Vec::new();
    let mut wf_rows = Vec::new();
    for ((language, provider, template), outcomes) in &by_template {
        let acc =
            metrics::accuracy(outcomes, false).map(fmt_rate).unwrap_or_else(|_| "N/A".into());
        let acc_repair =
            metrics::accuracy(outcomes, true).map(fmt_rate).unwrap_or_else(|_| "N/A".into());
        accuracy_rows.push(vec![
            template.to_string(),
            language.prompt_name().to_string(),
            provider.clone(),
            acc,
            acc_repair,
        ]);

        let total_attempts: usize = outcomes.iter().map(|o| o.n).sum();
        let total_wf: usize = outcomes.iter().map(|o| o.wf_count).sum();
        let rate = if total_attempts == 0 {
            "N/A".to_string()
        } else {
            fmt_rate(total_wf as f64 / total_attempts as f64)
        };
        wf_rows.push(vec![
            language.prompt_name().to_string(),
            provider.clone(),
            template.to_string(),
            rate,
        ]);
    }
    // Template-major ordering for the accuracy table.
    accuracy_rows.sort();

    let accuracy_by_template = TableDoc {
        name: "accuracy_by_template",
        header: vec![
            "template".into(),
            "language".into(),
            "provider".into(),
            "accuracy".into(),
            "accuracy_with_repair".into(),
        ],
        rows: accuracy_rows,
    };
    let wf_rate = TableDoc {
        name: "wf_rate",
        header: vec![
            "language".into(),
            "provider".into(),
            "template".into(),
            "wf_rate".into(),
        ],
        rows: wf_rows,
    };

    // pass@k per (language, provider), k = 1..attempts_k.
    let mut by_provider: BTreeMap<(TargetLanguage, String), Vec<TaskOutcome>> = BTreeMap::new();
    for derived in &outcomes {
        by_provider
            .entry((derived.cell.language, derived.cell.provider.clone()))
            .or_default()
            .push(derived.outcome.clone());
    }
    let max_k = store.config.attempts_k;
    let mut pass_rows = Vec::new();
    for ((language, provider), outcomes) in &by_provider {
        for k in 1..=max_k {
            let eligible: Vec<TaskOutcome> =
                outcomes.iter().filter(|o| o.n >= k).cloned().collect();
            let (without, with) = if eligible.is_empty() {
                ("N/A".to_string(), "N/A".to_string())
            } else {
                (
                    metrics::aggregate_pass_at_k(&eligible, k, false)
                        .map(fmt_rate)
                        .unwrap_or_else(|_| "N/A".into()),
                    metrics::aggregate_pass_at_k(&eligible, k, true)
                        .map(fmt_rate)
                        .unwrap_or_else(|_| "N/A".into()),
                )
            };
            pass_rows.push(vec![
                language.prompt_name().to_string(),
                provider.clone(),
                k.to_string(),
                without,
                with,
            ]);
        }
    }
    let pass_at_k = TableDoc {
        name: "pass_at_k",
        header: vec![
            "language".into(),
            "provider".into(),
            "k".into(),
            "pass_at_k".into(),
            "pass_at_k_with_repair".into(),
        ],
        rows: pass_rows,
    };

    let (chi_square, chi_square_notices) = chi_square_table(store);
    let token_estimate = token_estimate_table(&store.records);

    Ok(ReportBundle {
        accuracy_by_template,
        wf_rate,
        pass_at_k,
        chi_square,
        chi_square_notices,
        token_estimate,
    })
}

/// First-attempt correctness counts per template, tested for independence
/// per (language, provider). Repair is excluded: the test targets the
/// template's effect on raw generation.
fn chi_square_table(store: &RunStore) -> (TableDoc, Vec<String>) {
    let mut counts: BTreeMap<(TargetLanguage, String), BTreeMap<TemplateId, (f64, f64)>> =
        BTreeMap::new();
    for record in store.records.iter().filter(|r| r.ids.attempt_index == 1) {
        let cell = counts
            .entry((record.ids.language, record.ids.provider.clone()))
            .or_default()
            .entry(record.ids.template)
            .or_insert((0.0, 0.0));
        let correct = record.verdict_initial.as_ref().map(|v| v.correct).unwrap_or(false);
        if correct {
            cell.0 += 1.0;
        } else {
            cell.1 += 1.0;
        }
    }

    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for ((language, provider), by_template) in &counts {
        let table: Vec<Vec<f64>> = by_template.values().map(|&(c, i)| vec![c, i]).collect();
        if table.len() < 2 {
            notices.push(format!(
                "{}/{provider}: chi-square omitted, a single template gives 0 degrees of freedom",
                language.prompt_name().to_uppercase()
            ));
            continue;
        }
        match metrics::chi_square_test(&table, CHI_SQUARE_ALPHA) {
            Ok(result) => rows.push(chi_square_row(*language, provider, &result)),
            Err(err) => notices.push(format!(
                "{}/{provider}: chi-square omitted ({err})",
                language.prompt_name().to_uppercase()
            )),
        }
    }

    (
        TableDoc {
            name: "chi_square",
            header: vec![
                "language".into(),
                "model".into(),
                "chi_square_statistic".into(),
                "p_value".into(),
                "degrees_of_freedom".into(),
                "significance".into(),
            ],
            rows,
        },
        notices,
    )
}

/// Average static augmentation words per template over the distinct domains
/// it rendered against.
fn token_estimate_table(records: &[AttemptRecord]) -> TableDoc {
    let mut seen: BTreeSet<(TemplateId, String)> = BTreeSet::new();
    let mut sums: BTreeMap<TemplateId, (usize, usize)> = BTreeMap::new();
    for record in records {
        let key = (record.ids.template, record.ids.domain_id.clone());
        if !seen.insert(key) {
            continue;
        }
        let words = prompting::augmentation_words(&record.prompt_plan);
        let entry = sums.entry(record.ids.template).or_insert((0, 0));
        entry.0 += words;
        entry.1 += 1;
    }
    let rows = sums
        .into_iter()
        .map(|(template, (total, count))| {
            vec![template.to_string(), format!("{:.2}", total as f64 / count as f64)]
        })
        .collect();
    TableDoc {
        name: "token_estimate",
        header: vec!["template".into(), "avg_augmentation_words".into()],
        rows,
    }
}

/// Calibration tables: validator-vs-label for well-formedness and
/// judge-vs-label for correctness, per language, plus raw confusion counts.
pub struct CalibrationBundle {
    pub calibration: TableDoc,
    pub confusion_wf: TableDoc,
    pub confusion_correctness: TableDoc,
}

pub fn build_calibration(
    store: &RunStore,
    labels: &[ManualLabel],
) -> Result<CalibrationBundle, ReportError> {
    let mut wf_truth: BTreeMap<String, bool> = BTreeMap::new();
    let mut correctness_truth: BTreeMap<String, bool> = BTreeMap::new();
    for label in labels {
        if let Some(v) = label.wf_label {
            wf_truth.insert(label.snippet_ref.clone(), v);
        }
        if let Some(v) = label.correctness_label {
            correctness_truth.insert(label.snippet_ref.clone(), v);
        }
    }

    let mut calibration_rows = Vec::new();
    let mut wf_matrix_rows = Vec::new();
    let mut correctness_matrix_rows = Vec::new();
    let mut any_overlap = false;

    let languages: BTreeSet<TargetLanguage> =
        store.records.iter().map(|r| r.ids.language).collect();
    for language in languages {
        let records: Vec<&AttemptRecord> =
            store.records.iter().filter(|r| r.ids.language == language).collect();

        // The validator's decision on the initially extracted snippet.
        let wf_decisions: Vec<(String, bool)> = records
            .iter()
            .filter_map(|r| r.wf_initial.as_ref().map(|wf| (r.attempt_id.clone(), wf.passed)))
            .collect();
        // The judge's decision; unparseable replies count as incorrect.
        let correctness_decisions: Vec<(String, bool)> = records
            .iter()
            .filter_map(|r| match (&r.verdict_initial, r.judge_unparseable) {
                (Some(v), _) => Some((r.attempt_id.clone(), v.correct)),
                (None, true) => Some((r.attempt_id.clone(), false)),
                (None, false) => None,
            })
            .collect();

        let wf = judging::calibrate_against(&wf_decisions, &wf_truth).ok();
        let correctness =
            judging::calibrate_against(&correctness_decisions, &correctness_truth).ok();
        if wf.is_some() || correctness.is_some() {
            any_overlap = true;
        }

        let name = language.prompt_name().to_string();
        let cells = |c: &Option<Calibration>| match c {
            Some(c) => (fmt_calibration(c.precision), fmt_calibration(c.recall)),
            None => ("N/A".to_string(), "N/A".to_string()),
        };
        let (wf_p, wf_r) = cells(&wf);
        let (co_p, co_r) = cells(&correctness);
        calibration_rows.push(vec![name.clone(), wf_p, wf_r, co_p, co_r]);

        if let Some(c) = wf {
            wf_matrix_rows.push(vec![
                name.clone(),
                c.matrix.tp.to_string(),
                c.matrix.fn_.to_string(),
                c.matrix.fp.to_string(),
                c.matrix.tn.to_string(),
            ]);
        }
        if let Some(c) = correctness {
            correctness_matrix_rows.push(vec![
                name,
                c.matrix.tp.to_string(),
                c.matrix.fn_.to_string(),
                c.matrix.fp.to_string(),
                c.matrix.tn.to_string(),
            ]);
        }
    }

    if !any_overlap {
        return Err(ReportError::NoOverlap);
    }

    let matrix_header = || {
        vec![
            "language".to_string(),
            "tp".to_string(),
            "fn".to_string(),
            "fp".to_string(),
            "tn".to_string(),
        ]
    };
    Ok(CalibrationBundle {
        calibration: TableDoc {
            name: "calibration",
            header: vec![
                "language".into(),
                "wf_precision".into(),
                "wf_recall".into(),
                "correctness_precision".into(),
                "correctness_recall".into(),
            ],
            rows: calibration_rows,
        },
        confusion_wf: TableDoc {
            name: "confusion_wf",
            header: matrix_header(),
            rows: wf_matrix_rows,
        },
        confusion_correctness: TableDoc {
            name: "confusion_correctness",
            header: matrix_header(),
            rows: correctness_matrix_rows,
        },
    })
}

/// Write one file per table under `dir`, returning the paths written.
pub fn write_tables(
    tables: &[&TableDoc],
    notices: &[String],
    dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in tables {
        let path = dir.join(format!("{}.{}", table.name, format.extension()));
        std::fs::write(&path, table.render(format))?;
        written.push(path);
    }
    if !notices.is_empty() {
        let path = dir.join("notices.txt");
        std::fs::write(&path, notices.join("\n") + "\n")?;
        written.push(path);
    }
    Ok(written)
}

/// The dataset summary in the paper's column order.
pub fn stats_table(name: &str, stats: &DatasetStats) -> TableDoc {
    TableDoc {
        name: "dataset_stats",
        header: vec![
            "dataset".into(),
            "domains".into(),
            "domain_word_count".into(),
            "classes".into(),
            "associations".into(),
            "model_word_count_nl".into(),
            "model_word_count_formal".into(),
            "constraints".into(),
            "constraint_word_count".into(),
        ],
        rows: vec![vec![
            name.to_string(),
            stats.domain_count.to_string(),
            format!("{:.2}", stats.avg_description_words),
            stats.class_count.to_string(),
            stats.association_count.to_string(),
            format!("{:.2}", stats.avg_model_words_nl),
            format!("{:.2}", stats.avg_model_words_formal),
            stats.constraint_count.to_string(),
            format!("{:.2}", stats.avg_constraint_words),
        ]],
    }
}
