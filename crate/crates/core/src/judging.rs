//! LLM-as-a-judge correctness evaluation and calibration against manual
//! labels.

use crate::codeproc::Snippet;
use crate::dataset::{CodingTask, Domain, ManualLabel};
use crate::gateway::{ChatExchange, Gateway, GatewayError, ProviderConfig};
use crate::prompting::{templates, Message};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("judge reply unparseable after re-ask")]
    JudgeUnparseable { exchanges: Vec<ChatExchange> },
}

#[derive(Debug, Error, PartialEq)]
#[error("no verdict line in judge reply")]
pub struct NoVerdictLine;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no overlap between decisions and labels")]
    NoOverlap,
}

/// One judge decision. An incorrect verdict always carries feedback since
/// the correctness repair prompt quotes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub feedback: String,
    pub judge_model: String,
    pub raw: String,
}

const NO_FEEDBACK_FALLBACK: &str = "The judge marked the code incorrect without explaining why.";

/// Parse `VERDICT: CORRECT` / `VERDICT: INCORRECT` (case-insensitive) off
/// the first non-empty line; the remainder is feedback.
pub fn parse_verdict(raw: &str) -> Result<(bool, String), NoVerdictLine> {
    let mut lines = raw.lines();
    let first = loop {
        match lines.next() {
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => break line.trim(),
            None => return Err(NoVerdictLine),
        }
    };
    let lowered = first.to_ascii_lowercase();
    let rest = lowered.strip_prefix("verdict:").ok_or(NoVerdictLine)?;
    let correct = match rest.trim().trim_end_matches('.') {
        "correct" => true,
        "incorrect" => false,
        _ => return Err(NoVerdictLine),
    };
    let feedback = lines.collect::<Vec<_>>().join("\n").trim().to_string();
    Ok((correct, feedback))
}

fn build_judge_prompt(snippet: &Snippet, task: &CodingTask, domain: &Domain) -> String {
    templates::JUDGE
        .replace("{LANGUAGE}", snippet.language.prompt_name())
        .replace("{DOMAIN_DESCRIPTION}", domain.description_nl.as_deref().unwrap_or("(none)"))
        .replace("{TASK_SPEC}", &task.spec_nl)
        .replace("{CODE}", &snippet.text)
}

/// Judge one well-formed snippet against its task specification and domain
/// description. One re-ask on an unparseable reply, then the attempt
/// surfaces as `JudgeUnparseable`.
///
/// Returns the verdict plus every exchange issued, for run-store logging.
pub fn judge(
    snippet: &Snippet,
    task: &CodingTask,
    domain: &Domain,
    gateway: &Gateway,
    judge_provider: &ProviderConfig,
    attempt_index: usize,
) -> Result<(Verdict, Vec<ChatExchange>), JudgeError> {
    let prompt = build_judge_prompt(snippet, task, domain);
    let first = gateway.chat(judge_provider, &[Message::user(prompt.clone())], attempt_index)?;
    let first_text = first.response_text.clone().unwrap_or_default();

    match parse_verdict(&first_text) {
        Ok((correct, feedback)) => {
            let verdict = make_verdict(correct, feedback, judge_provider, first_text);
            Ok((verdict, vec![first]))
        }
        Err(NoVerdictLine) => {
            let reask = vec![
                Message::user(prompt),
                Message::assistant(first_text),
                Message::user(templates::JUDGE_REASK),
            ];
            let second = gateway.chat(judge_provider, &reask, attempt_index)?;
            let second_text = second.response_text.clone().unwrap_or_default();
            match parse_verdict(&second_text) {
                Ok((correct, feedback)) => {
                    let verdict = make_verdict(correct, feedback, judge_provider, second_text);
                    Ok((verdict, vec![first, second]))
                }
                Err(NoVerdictLine) => {
                    Err(JudgeError::JudgeUnparseable { exchanges: vec![first, second] })
                }
            }
        }
    }
}

fn make_verdict(
    correct: bool,
    feedback: String,
    provider: &ProviderConfig,
    raw: String,
) -> Verdict {
    let feedback = if !correct && feedback.is_empty() {
        NO_FEEDBACK_FALLBACK.to_string()
    } else {
        feedback
    };
    Verdict { correct, feedback, judge_model: provider.model_id.clone(), raw }
}

/// Agreement counts between an automatic check (columns) and the manual
/// evaluation (rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Calibration of an automatic check against manual labels. Ratios with a
/// zero denominator are `None` and render as N/A, never as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub matrix: ConfusionMatrix,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Compare automatic decisions with ground-truth booleans keyed by the same
/// ids. Only overlapping ids count; order never matters.
pub fn calibrate_against(
    decisions: &[(String, bool)],
    truth: &BTreeMap<String, bool>,
) -> Result<Calibration, CalibrationError> {
    let mut matrix = ConfusionMatrix::default();
    let decisions: BTreeMap<&str, bool> =
        decisions.iter().map(|(id, d)| (id.as_str(), *d)).collect();
    for (id, &automatic) in &decisions {
        let Some(&manual) = truth.get(*id) else { continue };
        match (manual, automatic) {
            (true, true) => matrix.tp += 1,
            (false, true) => matrix.fp += 1,
            (true, false) => matrix.fn_ += 1,
            (false, false) => matrix.tn += 1,
        }
    }
    if matrix.total() == 0 {
        return Err(CalibrationError::NoOverlap);
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Calibration {
        matrix,
        precision: ratio(matrix.tp, matrix.tp + matrix.fp),
        recall: ratio(matrix.tp, matrix.tp + matrix.fn_),
    })
}

/// Calibrate judge correctness decisions against manual correctness labels.
pub fn calibrate(
    judge_decisions: &[(String, bool)],
    labels: &[ManualLabel],
) -> Result<Calibration, CalibrationError> {
    let truth: BTreeMap<String, bool> = labels
        .iter()
        .filter_map(|l| l.correctness_label.map(|v| (l.snippet_ref.clone(), v)))
        .collect();
    calibrate_against(judge_decisions, &truth)
}
