//! Snippet extraction from raw LLM output, batch-response splitting, and
//! language shaping checks.

use crate::TargetLanguage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodeProcError {
    #[error("no code found in response")]
    NoCodeFound,
    #[error("batch split mismatch: found {found} snippets, expected {expected}")]
    SplitMismatch { found: usize, expected: usize },
}

/// Where a snippet came from in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnippetOrigin {
    Initial,
    WfRepaired,
    CorrectnessRepaired,
}

/// Extracted code attributed to one task attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    pub language: TargetLanguage,
    pub task_id: String,
    pub attempt_index: usize,
    pub origin: SnippetOrigin,
}

impl Snippet {
    pub fn new(
        text: impl Into<String>,
        language: TargetLanguage,
        task_id: impl Into<String>,
        attempt_index: usize,
        origin: SnippetOrigin,
    ) -> Self {
        let text = text.into();
        debug_assert!(!text.trim().is_empty(), "snippet text must be non-empty");
        debug_assert!(attempt_index >= 1);
        Snippet { text, language, task_id: task_id.into(), attempt_index, origin }
    }
}

struct FencedBlock {
    info: String,
    content: String,
}

fn fenced_blocks(raw: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    let mut current: Option<FencedBlock> = None;
    for line in raw.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => {
                    let info = trimmed.trim_start_matches('`').trim().to_ascii_lowercase();
                    current = Some(FencedBlock { info, content: String::new() });
                }
            }
        } else if let Some(ref mut block) = current {
            block.content.push_str(line);
            block.content.push('\n');
        }
    }
    blocks
}

fn contains_anchor(text: &str, language: TargetLanguage) -> bool {
    let words: Vec<&str> = text
        .split(|c: char| c.is_whitespace() || c == '(' || c == ':' || c == '{')
        .collect();
    language.anchor_keywords().iter().any(|kw| words.contains(kw))
}

/// Pull the code out of a raw completion.
///
/// Priority: first fenced block with a matching info-string, then the first
/// fenced block of any kind, then the whole text when it carries a language
/// anchor keyword. Idempotent on already-extracted snippets.
pub fn extract_code(raw: &str, language: TargetLanguage) -> Result<String, CodeProcError> {
    let blocks = fenced_blocks(raw);

    if let Some(block) =
        blocks.iter().find(|b| language.fence_aliases().contains(&b.info.as_str()))
    {
        let text = block.content.trim();
        if !text.is_empty() {
            return Ok(text.to_string());
        }
    }
    if let Some(block) = blocks.iter().find(|b| !b.content.trim().is_empty()) {
        return Ok(block.content.trim().to_string());
    }
    if contains_anchor(raw, language) {
        return Ok(raw.to_string());
    }
    Err(CodeProcError::NoCodeFound)
}

/// Split a batch response into exactly `n_tasks` snippets in task order.
///
/// Fenced blocks are collected first; when their count does not match, the
/// response is re-split on numbered headings and each segment re-extracted.
/// Anything short of an exact count fails the whole batch.
pub fn split_batch(
    raw: &str,
    n_tasks: usize,
    language: TargetLanguage,
) -> Result<Vec<String>, CodeProcError> {
    assert!(n_tasks >= 2, "split_batch is for multi-task batches");
    let blocks = fenced_blocks(raw);
    let non_empty: Vec<&FencedBlock> =
        blocks.iter().filter(|b| !b.content.trim().is_empty()).collect();
    if non_empty.len() == n_tasks {
        return Ok(non_empty.iter().map(|b| b.content.trim().to_string()).collect());
    }

    let segments = numbered_segments(raw);
    if segments.len() == n_tasks {
        let mut snippets = Vec::with_capacity(n_tasks);
        for segment in &segments {
            match extract_code(segment, language) {
                Ok(snippet) => snippets.push(snippet),
                Err(_) => {
                    return Err(CodeProcError::SplitMismatch {
                        found: snippets.len(),
                        expected: n_tasks,
                    })
                }
            }
        }
        return Ok(snippets);
    }

    Err(CodeProcError::SplitMismatch { found: non_empty.len(), expected: n_tasks })
}

/// Split on lines that open a numbered heading like `1.` / `2)` / `3:`.
fn numbered_segments(raw: &str) -> Vec<String> {
    let mut segments: Vec<String> = Vec::new();
    let mut expected_next = 1u32;
    for line in raw.lines() {
        if is_numbered_heading(line, expected_next) {
            segments.push(String::new());
            expected_next += 1;
        }
        if let Some(segment) = segments.last_mut() {
            segment.push_str(line);
            segment.push('\n');
        }
    }
    segments
}

fn is_numbered_heading(line: &str, expected: u32) -> bool {
    let trimmed = line.trim_start();
    let digits: String = trimmed.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || digits.parse::<u32>() != Ok(expected) {
        return false;
    }
    matches!(trimmed[digits.len()..].chars().next(), Some('.') | Some(')') | Some(':'))
}

/// Outcome of the language-specific shaping check. Violations are recorded
/// as metadata; they do not fail well-formedness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum ShapeCheck {
    Ok,
    Violation(String),
}

impl ShapeCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ShapeCheck::Ok)
    }
}

/// Verify the output-shaping rule for the snippet's language: one boolean
/// function for the baseline, a single `fact` for Alloy, nothing for OCL.
pub fn shape_check(snippet: &Snippet) -> ShapeCheck {
    match snippet.language {
        TargetLanguage::Ocl => ShapeCheck::Ok,
        TargetLanguage::Alloy => check_alloy_shape(&snippet.text),
        TargetLanguage::Python => check_baseline_shape(&snippet.text),
    }
}

fn check_alloy_shape(text: &str) -> ShapeCheck {
    let fact_count = text
        .lines()
        .flat_map(|l| l.split_whitespace())
        .filter(|w| *w == "fact")
        .count();
    match fact_count {
        0 => ShapeCheck::Violation("no fact block".into()),
        1 => {
            let opens = text.matches('{').count();
            let closes = text.matches('}').count();
            if opens == closes {
                ShapeCheck::Ok
            } else {
                ShapeCheck::Violation("unbalanced braces in fact".into())
            }
        }
        n => ShapeCheck::Violation(format!("multiple facts ({n})")),
    }
}

fn check_baseline_shape(text: &str) -> ShapeCheck {
    let top_level_defs = text
        .lines()
        .filter(|l| l.starts_with("def ") || l.starts_with("def\t"))
        .count();
    if top_level_defs == 0 {
        return ShapeCheck::Violation("no top-level function definition".into());
    }
    if top_level_defs > 1 {
        return ShapeCheck::Violation(format!("multiple top-level functions ({top_level_defs})"));
    }
    if !has_truth_valued_return(text) {
        return ShapeCheck::Violation("no truth-valued return".into());
    }
    ShapeCheck::Ok
}

/// Lexical check: a `return` whose expression carries a comparison/boolean
/// operator or a boolean literal.
fn has_truth_valued_return(text: &str) -> bool {
    const OPERATORS: [&str; 10] =
        ["==", "!=", "<=", ">=", "<", ">", " and ", " or ", "not ", " in "];
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(expr) = trimmed.strip_prefix("return ") {
            let expr = expr.trim();
            let words: Vec<&str> = expr.split_whitespace().collect();
            if words.contains(&"True") || words.contains(&"False") {
                return true;
            }
            if OPERATORS.iter().any(|op| expr.contains(op)) {
                return true;
            }
        }
    }
    false
}
