//! Datasets of modeled domains and the coding tasks defined against them.
//!
//! On disk a dataset is one directory per domain:
//!
//! ```text
//! <root>/<domain-id>/domain.json    {"id", "name", "description_nl"?}
//! <root>/<domain-id>/model.puml     optional PlantUML class diagram
//! <root>/<domain-id>/model_nl.txt   optional natural-language model rendering
//! <root>/<domain-id>/tasks.jsonl    one task per line: {"id", "spec_nl", "tags"?}
//! <root>/labels.jsonl               optional manual labels keyed by attempt id
//! ```
//!
//! Everything is UTF-8. Loaded datasets are immutable and safe to share
//! across pipeline workers.

use crate::gateway::{Gateway, GatewayError, ProviderConfig};
use crate::prompting::Message;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset: {0}")]
    MissingDataset(String),
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("malformed record in {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), source }
}

/// A modeled domain: textual and/or formal descriptions plus its task ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub id: String,
    pub name: String,
    /// Natural-language domain description.
    pub description_nl: Option<String>,
    /// PlantUML class diagram source.
    pub model_formal: Option<String>,
    /// Natural-language rendering of the class diagram.
    pub model_nl: Option<String>,
    pub task_ids: Vec<String>,
}

impl Domain {
    fn validate(&self) -> Result<(), DatasetError> {
        let has_any = [&self.description_nl, &self.model_formal, &self.model_nl]
            .iter()
            .any(|f| f.as_deref().is_some_and(|s| !s.trim().is_empty()));
        if !has_any {
            return Err(DatasetError::Invalid(format!(
                "domain '{}' has no description, formal model, or NL model",
                self.id
            )));
        }
        Ok(())
    }
}

/// One natural-language constraint to implement against a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingTask {
    pub id: String,
    pub domain_id: String,
    pub spec_nl: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// A human annotation of one run-store attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualLabel {
    /// Attempt id in the run store this label refers to.
    pub snippet_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_label: Option<bool>,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Domains sorted by id.
    pub domains: Vec<Domain>,
    /// Tasks grouped by domain, preserving per-domain file order.
    pub tasks: Vec<CodingTask>,
}

impl Dataset {
    pub fn domain(&self, id: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&CodingTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Tasks of one domain in their tasks.jsonl order.
    pub fn tasks_for(&self, domain_id: &str) -> Vec<&CodingTask> {
        self.tasks.iter().filter(|t| t.domain_id == domain_id).collect()
    }
}

/// Aggregate counts over a dataset, word counts are whitespace-delimited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub domain_count: usize,
    pub avg_description_words: f64,
    pub class_count: usize,
    pub association_count: usize,
    pub avg_model_words_nl: f64,
    pub avg_model_words_formal: f64,
    pub constraint_count: usize,
    pub avg_constraint_words: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainFile {
    id: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description_nl: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRecord {
    id: String,
    spec_nl: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tags: Vec<String>,
    /// Optional; when present it must match the enclosing domain directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_id: Option<String>,
}

/// Load a dataset from the directory layout above, validating every
/// cross-reference. Domains come back sorted by id so results never depend
/// on directory enumeration order.
pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingDataset(format!(
            "{} is not a directory",
            root.display()
        )));
    }

    let mut domain_dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| entry.path())
        .collect();
    domain_dirs.sort();

    let mut domains = Vec::new();
    let mut tasks = Vec::new();
    let mut domain_ids = BTreeSet::new();
    let mut task_ids = BTreeSet::new();

    for dir in &domain_dirs {
        let domain_json = dir.join("domain.json");
        if !domain_json.exists() {
            // Not a domain directory; ignore (allows e.g. a reports/ sibling).
            continue;
        }
        let raw = fs::read_to_string(&domain_json).map_err(|e| io_err(&domain_json, e))?;
        let file: DomainFile = serde_json::from_str(&raw).map_err(|e| DatasetError::Malformed {
            path: domain_json.display().to_string(),
            source: e,
        })?;

        let dir_name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if file.id != dir_name {
            return Err(DatasetError::Invalid(format!(
                "domain id '{}' does not match directory '{}'",
                file.id, dir_name
            )));
        }
        if !domain_ids.insert(file.id.clone()) {
            return Err(DatasetError::DuplicateId(file.id));
        }

        let model_formal = read_optional(&dir.join("model.puml"))?;
        let model_nl = read_optional(&dir.join("model_nl.txt"))?;

        let mut domain = Domain {
            id: file.id.clone(),
            name: file.name,
            description_nl: file.description_nl.filter(|s| !s.trim().is_empty()),
            model_formal,
            model_nl,
            task_ids: Vec::new(),
        };

        let tasks_path = dir.join("tasks.jsonl");
        if tasks_path.exists() {
            let raw = fs::read_to_string(&tasks_path).map_err(|e| io_err(&tasks_path, e))?;
            for line in raw.lines().filter(|l| !l.trim().is_empty()) {
                let record: TaskRecord =
                    serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                        path: tasks_path.display().to_string(),
                        source: e,
                    })?;
                if record.spec_nl.trim().is_empty() {
                    return Err(DatasetError::Invalid(format!(
                        "task '{}' has an empty spec",
                        record.id
                    )));
                }
                if let Some(ref declared) = record.domain_id {
                    if declared != &domain.id {
                        return Err(DatasetError::DanglingReference(format!(
                            "task '{}' references domain '{}' but lives under '{}'",
                            record.id, declared, domain.id
                        )));
                    }
                }
                if !task_ids.insert(record.id.clone()) {
                    return Err(DatasetError::DuplicateId(record.id));
                }
                domain.task_ids.push(record.id.clone());
                tasks.push(CodingTask {
                    id: record.id,
                    domain_id: domain.id.clone(),
                    spec_nl: record.spec_nl,
                    tags: record.tags,
                });
            }
        }

        domain.validate()?;
        domains.push(domain);
    }

    if domains.is_empty() {
        return Err(DatasetError::MissingDataset(format!(
            "no domain directories under {}",
            root.display()
        )));
    }

    domains.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset { domains, tasks })
}

/// Write a dataset back out in the canonical layout; `load_dataset` of the
/// result reproduces the input.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    for domain in &ds.domains {
        let dir = root.join(&domain.id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

        let file = DomainFile {
            id: domain.id.clone(),
            name: domain.name.clone(),
            description_nl: domain.description_nl.clone(),
        };
        let path = dir.join("domain.json");
        let body = serde_json::to_string_pretty(&file).expect("domain file serializes");
        fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))?;

        if let Some(ref model) = domain.model_formal {
            let path = dir.join("model.puml");
            fs::write(&path, model).map_err(|e| io_err(&path, e))?;
        }
        if let Some(ref model) = domain.model_nl {
            let path = dir.join("model_nl.txt");
            fs::write(&path, model).map_err(|e| io_err(&path, e))?;
        }

        let mut lines = String::new();
        for task in ds.tasks.iter().filter(|t| t.domain_id == domain.id) {
            let record = TaskRecord {
                id: task.id.clone(),
                spec_nl: task.spec_nl.clone(),
                tags: task.tags.clone(),
                domain_id: None,
            };
            lines.push_str(&serde_json::to_string(&record).expect("task serializes"));
            lines.push('\n');
        }
        let path = dir.join("tasks.jsonl");
        fs::write(&path, lines).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Load manual labels from `<root>/labels.jsonl`; absent file means no labels.
pub fn load_labels(path: &Path) -> Result<Vec<ManualLabel>, DatasetError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut labels = Vec::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let label: ManualLabel =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: path.display().to_string(),
                source: e,
            })?;
        if label.wf_label.is_none() && label.correctness_label.is_none() {
            return Err(DatasetError::Invalid(format!(
                "label for '{}' carries neither a well-formedness nor a correctness value",
                label.snippet_ref
            )));
        }
        labels.push(label);
    }
    Ok(labels)
}

fn read_optional(path: &Path) -> Result<Option<String>, DatasetError> {
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        if text.trim().is_empty() {
            Ok(None)
        } else {
            Ok(Some(text))
        }
    } else {
        Ok(None)
    }
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Compute the summary statistics table for a dataset.
///
/// Word counts split on Unicode whitespace; class and association counts are
/// lexical scans of the PlantUML sources. Missing artifacts contribute zero.
pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let domain_count = ds.domains.len();
    let desc_words: usize =
        ds.domains.iter().map(|d| d.description_nl.as_deref().map_or(0, word_count)).sum();
    let nl_words: usize =
        ds.domains.iter().map(|d| d.model_nl.as_deref().map_or(0, word_count)).sum();
    let formal_words: usize =
        ds.domains.iter().map(|d| d.model_formal.as_deref().map_or(0, word_count)).sum();

    let mut class_count = 0;
    let mut association_count = 0;
    for domain in &ds.domains {
        if let Some(ref model) = domain.model_formal {
            class_count += count_class_declarations(model);
            association_count += count_associations(model);
        }
    }

    let constraint_count = ds.tasks.len();
    let constraint_words: usize = ds.tasks.iter().map(|t| word_count(&t.spec_nl)).sum();

    let avg = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    DatasetStats {
        domain_count,
        avg_description_words: avg(desc_words, domain_count),
        class_count,
        association_count,
        avg_model_words_nl: avg(nl_words, domain_count),
        avg_model_words_formal: avg(formal_words, domain_count),
        constraint_count,
        avg_constraint_words: avg(constraint_words, constraint_count),
    }
}

fn is_identifier_like(token: &str) -> bool {
    let t = token.trim_matches('"');
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
}

/// Count `class <Name>` declarations, including `abstract class <Name>`.
fn count_class_declarations(puml: &str) -> usize {
    let mut count = 0;
    for line in puml.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('\'') {
            continue; // PlantUML comment
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        for window in tokens.windows(2) {
            if window[0] == "class" && is_identifier_like(window[1]) {
                count += 1;
                break;
            }
        }
    }
    count
}

/// PlantUML relation tokens, longest first so `--` never shadows `<|--`.
const RELATION_TOKENS: [&str; 9] =
    ["<|--", "--|>", "o--", "--o", "*--", "--*", "<--", "-->", "--"];

fn contains_identifier(s: &str) -> bool {
    s.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|part| is_identifier_like(part))
}

/// A line counts as one association when a relation token sits between two
/// identifiers.
fn count_associations(puml: &str) -> usize {
    let mut count = 0;
    for line in puml.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('\'') {
            continue;
        }
        for token in RELATION_TOKENS {
            if let Some(pos) = trimmed.find(token) {
                let (left, right) = (&trimmed[..pos], &trimmed[pos + token.len()..]);
                if contains_identifier(left) && contains_identifier(right) {
                    count += 1;
                    break;
                }
            }
        }
    }
    count
}

/// Ask a provider to synthesize a natural-language description for a domain
/// whose textual description is missing. The prompt carries the PlantUML
/// model and the domain's constraint set; the caller decides persistence.
pub fn complete_domain_description(
    domain: &Domain,
    constraints: &[&CodingTask],
    gateway: &Gateway,
    provider: &ProviderConfig,
) -> Result<String, DatasetError> {
    let model = domain.model_formal.as_deref().ok_or_else(|| {
        DatasetError::PreconditionFailed(format!(
            "domain '{}' has no formal model to describe",
            domain.id
        ))
    })?;

    let mut constraint_list = String::new();
    for (i, task) in constraints.iter().enumerate() {
        constraint_list.push_str(&format!("{}. {}\n", i + 1, task.spec_nl));
    }
    let prompt = crate::prompting::templates::COMPLETE_DESCRIPTION
        .replace("{DOMAIN_MODEL}", model)
        .replace("{CONSTRAINTS}", constraint_list.trim_end());

    let exchange = gateway.chat(provider, &[Message::user(prompt)], 1)?;
    Ok(exchange.response_text.unwrap_or_default().trim().to_string())
}
