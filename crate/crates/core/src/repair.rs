//! Single-pass LLM repair for snippets that fail well-formedness or
//! correctness. Each failed stage gets exactly one repair; a repair whose
//! reply contains no extractable code fails the task.

use crate::codeproc::{self, Snippet, SnippetOrigin};
use crate::dataset::{CodingTask, Domain};
use crate::gateway::{ChatExchange, Gateway, GatewayError, ProviderConfig};
use crate::prompting::{templates, Message};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("repair reply contained no code")]
    RepairFailed { exchanges: Vec<ChatExchange> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStage {
    WellFormedness,
    Correctness,
}

/// Well-formedness repair flow: two exchanges (explain, then fix) or one
/// combined prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WfRepairMode {
    TwoCall,
    OneCall,
}

impl Default for WfRepairMode {
    fn default() -> Self {
        WfRepairMode::TwoCall
    }
}

/// One completed repair: what went in, what the model said, what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub stage: RepairStage,
    pub input_snippet: Snippet,
    /// The validator diagnostics or judge feedback quoted into the prompt.
    pub feedback: String,
    /// Two-call well-formedness mode only: the model's error explanation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub output_snippet: Snippet,
    /// Keys of the gateway exchanges this repair issued.
    pub exchange_keys: Vec<String>,
}

/// Repair a snippet that failed well-formedness. Returns the record plus
/// the exchanges for run-store logging.
pub fn repair_wf(
    snippet: &Snippet,
    diagnostics: &str,
    original_instruction: &str,
    gateway: &Gateway,
    provider: &ProviderConfig,
    mode: WfRepairMode,
    attempt_index: usize,
) -> Result<(RepairRecord, Vec<ChatExchange>), RepairError> {
    if diagnostics.trim().is_empty() {
        return Err(RepairError::PreconditionFailed(
            "well-formedness repair requires non-empty diagnostics".into(),
        ));
    }
    let language = snippet.language.prompt_name();

    let (exchanges, explanation, reply) = match mode {
        WfRepairMode::TwoCall => {
            let explain_prompt = templates::REPAIR_WF_EXPLAIN
                .replace("{LANGUAGE}", language)
                .replace("{CODE}", &snippet.text)
                .replace("{ERROR}", diagnostics);
            let first =
                gateway.chat(provider, &[Message::user(explain_prompt)], attempt_index)?;
            let explanation = first.response_text.clone().unwrap_or_default();

            let fix_prompt = templates::REPAIR_WF_FIX
                .replace("{LANGUAGE}", language)
                .replace("{CODE}", &snippet.text)
                .replace("{ERROR}", diagnostics)
                .replace("{EXPLANATION}", &explanation)
                .replace("{INSTRUCTION}", original_instruction);
            let second = gateway.chat(provider, &[Message::user(fix_prompt)], attempt_index)?;
            let reply = second.response_text.clone().unwrap_or_default();
            (vec![first, second], Some(explanation), reply)
        }
        WfRepairMode::OneCall => {
            let prompt = templates::REPAIR_WF_SINGLE
                .replace("{LANGUAGE}", language)
                .replace("{CODE}", &snippet.text)
                .replace("{ERROR}", diagnostics)
                .replace("{INSTRUCTION}", original_instruction);
            let only = gateway.chat(provider, &[Message::user(prompt)], attempt_index)?;
            let reply = only.response_text.clone().unwrap_or_default();
            (vec![only], None, reply)
        }
    };

    let fixed = match codeproc::extract_code(&reply, snippet.language) {
        Ok(text) => text,
        Err(_) => return Err(RepairError::RepairFailed { exchanges }),
    };
    let record = RepairRecord {
        stage: RepairStage::WellFormedness,
        input_snippet: snippet.clone(),
        feedback: diagnostics.to_string(),
        explanation,
        output_snippet: Snippet::new(
            fixed,
            snippet.language,
            snippet.task_id.clone(),
            snippet.attempt_index,
            SnippetOrigin::WfRepaired,
        ),
        exchange_keys: exchanges.iter().map(|e| e.key.clone()).collect(),
    };
    Ok((record, exchanges))
}

/// Repair a well-formed snippet the judge found incorrect: one prompt with
/// the task spec, domain description, faulty code and judge feedback.
pub fn repair_correctness(
    snippet: &Snippet,
    judge_feedback: &str,
    task: &CodingTask,
    domain: &Domain,
    original_instruction: &str,
    gateway: &Gateway,
    provider: &ProviderConfig,
    attempt_index: usize,
) -> Result<(RepairRecord, Vec<ChatExchange>), RepairError> {
    if judge_feedback.trim().is_empty() {
        return Err(RepairError::PreconditionFailed(
            "correctness repair requires non-empty judge feedback".into(),
        ));
    }
    let prompt = templates::REPAIR_CORRECTNESS
        .replace("{LANGUAGE}", snippet.language.prompt_name())
        .replace("{TASK_SPEC}", &task.spec_nl)
        .replace("{DOMAIN_DESCRIPTION}", domain.description_nl.as_deref().unwrap_or("(none)"))
        .replace("{CODE}", &snippet.text)
        .replace("{FEEDBACK}", judge_feedback)
        .replace("{INSTRUCTION}", original_instruction);
    let exchange = gateway.chat(provider, &[Message::user(prompt)], attempt_index)?;
    let reply = exchange.response_text.clone().unwrap_or_default();

    let fixed = match codeproc::extract_code(&reply, snippet.language) {
        Ok(text) => text,
        Err(_) => return Err(RepairError::RepairFailed { exchanges: vec![exchange] }),
    };
    let record = RepairRecord {
        stage: RepairStage::Correctness,
        input_snippet: snippet.clone(),
        feedback: judge_feedback.to_string(),
        explanation: None,
        output_snippet: Snippet::new(
            fixed,
            snippet.language,
            snippet.task_id.clone(),
            snippet.attempt_index,
            SnippetOrigin::CorrectnessRepaired,
        ),
        exchange_keys: exchange_keys(&exchange),
    };
    Ok((record, vec![exchange]))
}

fn exchange_keys(exchange: &ChatExchange) -> Vec<String> {
    vec![exchange.key.clone()]
}
