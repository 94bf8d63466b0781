//! The nine prompt templates and the three task-delivery modes.
//!
//! Rendering is pure: two-round templates and chained delivery leave marked
//! placeholders (`{{ROUND1_REPLY}}`, `{{CHAIN_CONTEXT}}`) in the plan and the
//! orchestrator splices live content in, so identical inputs always produce
//! byte-identical plans.

use crate::dataset::{CodingTask, Domain};
use crate::TargetLanguage;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Versioned prompt wording. Tests golden-pin rendered plans, so changes
/// here are breaking.
pub mod templates {
    pub const DOMAIN_DESCRIPTION: &str = include_str!("../templates/domain_description.txt");
    pub const DOMAIN_MODEL_FORMAL: &str = include_str!("../templates/domain_model_formal.txt");
    pub const DOMAIN_MODEL_NL: &str = include_str!("../templates/domain_model_nl.txt");
    pub const EXPLAIN_REQUEST: &str = include_str!("../templates/explain_request.txt");
    pub const EXPLANATION_CONTEXT: &str = include_str!("../templates/explanation_context.txt");
    pub const CODE_DM_NL_REQUEST: &str = include_str!("../templates/code_dm_nl_request.txt");
    pub const CODE_DM_FORMAL_REQUEST: &str =
        include_str!("../templates/code_dm_formal_request.txt");
    pub const CODED_MODEL_CONTEXT: &str = include_str!("../templates/coded_model_context.txt");
    pub const SHAPE_ALLOY: &str = include_str!("../templates/shape_alloy.txt");
    pub const SHAPE_PYTHON: &str = include_str!("../templates/shape_python.txt");
    pub const BATCH_FORMAT: &str = include_str!("../templates/batch_format.txt");
    pub const JUDGE: &str = include_str!("../templates/judge.txt");
    pub const JUDGE_REASK: &str = include_str!("../templates/judge_reask.txt");
    pub const REPAIR_WF_EXPLAIN: &str = include_str!("../templates/repair_wf_explain.txt");
    pub const REPAIR_WF_FIX: &str = include_str!("../templates/repair_wf_fix.txt");
    pub const REPAIR_WF_SINGLE: &str = include_str!("../templates/repair_wf_single.txt");
    pub const REPAIR_CORRECTNESS: &str = include_str!("../templates/repair_correctness.txt");
    pub const COMPLETE_DESCRIPTION: &str = include_str!("../templates/complete_description.txt");
}

/// Instruction prefix every final prompt carries, verbatim.
pub const INSTRUCTION_PREFIX: &str = "Code the following constraint in";

/// Placeholder spliced with the round-1 reply of a two-round template.
pub const ROUND1_REPLY_PLACEHOLDER: &str = "{{ROUND1_REPLY}}";
/// Placeholder spliced with prior-task snippets under chained delivery.
pub const CHAIN_CONTEXT_PLACEHOLDER: &str = "{{CHAIN_CONTEXT}}";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template {template} requires {component}, absent on domain '{domain}'")]
    MissingComponent { template: TemplateId, component: &'static str, domain: String },
    #[error("no tasks supplied")]
    EmptyTasks,
    #[error("{0:?} delivery renders one plan per task; got {1} tasks")]
    OneTaskPerPlan(DeliveryMode, usize),
}

/// Template identifiers PT1..PT9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    PT1,
    PT2,
    PT3,
    PT4,
    PT5,
    PT6,
    PT7,
    PT8,
    PT9,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::PT1,
        TemplateId::PT2,
        TemplateId::PT3,
        TemplateId::PT4,
        TemplateId::PT5,
        TemplateId::PT6,
        TemplateId::PT7,
        TemplateId::PT8,
        TemplateId::PT9,
    ];
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TemplateId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .iter()
            .find(|t| format!("{t:?}").eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown template '{s}'"))
    }
}

/// How (and whether) the domain model enters a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelForm {
    None,
    Formal,
    Nl,
}

/// One row of the template table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: TemplateId,
    pub include_description: bool,
    pub domain_model_form: ModelForm,
    /// Round 1 asks the model to explain the supplied domain model.
    pub explain_dm: bool,
    /// Round 1 asks the model to generate a domain model in this form.
    pub code_dm: ModelForm,
    pub rounds: usize,
}

/// The fixed template table. Two rounds exactly when the template requests
/// an explanation or a generated domain model.
pub fn template_spec(id: TemplateId) -> TemplateSpec {
    use ModelForm::*;
    let (include_description, domain_model_form, explain_dm, code_dm) = match id {
        TemplateId::PT1 => (true, None, false, None),
        TemplateId::PT2 => (false, Formal, false, None),
        TemplateId::PT3 => (false, Nl, false, None),
        TemplateId::PT4 => (false, Formal, true, None),
        TemplateId::PT5 => (false, Nl, true, None),
        TemplateId::PT6 => (true, None, false, Nl),
        TemplateId::PT7 => (true, None, false, Formal),
        TemplateId::PT8 => (true, Formal, false, None),
        TemplateId::PT9 => (true, Nl, false, None),
    };
    let rounds = if explain_dm || code_dm != None { 2 } else { 1 };
    TemplateSpec { id, include_description, domain_model_form, explain_dm, code_dm, rounds }
}

/// Task-delivery mode for multi-task domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    /// All tasks in one prompt, one output per task.
    Op1Batch,
    /// One task per plan, prior extracted snippets carried as context.
    Op2Chained,
    /// One task per plan, no cross-task content.
    Op3Isolated,
}

impl DeliveryMode {
    pub fn key(&self) -> &'static str {
        match self {
            DeliveryMode::Op1Batch => "op1_batch",
            DeliveryMode::Op2Chained => "op2_chained",
            DeliveryMode::Op3Isolated => "op3_isolated",
        }
    }
}

impl FromStr for DeliveryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "op1" | "op1_batch" | "batch" => Ok(DeliveryMode::Op1Batch),
            "op2" | "op2_chained" | "chained" => Ok(DeliveryMode::Op2Chained),
            "op3" | "op3_isolated" | "isolated" => Ok(DeliveryMode::Op3Isolated),
            other => Err(format!("unknown delivery mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One chat message in the paper's `{role, content}` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Ordered rounds of messages; each round is one chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub rounds: Vec<Vec<Message>>,
    /// Code snippets expected from the final round.
    pub expects_outputs: usize,
}

impl PromptPlan {
    /// Content of the final instruction message (repair prompts restate it).
    pub fn final_instruction(&self) -> &str {
        self.rounds
            .last()
            .and_then(|r| r.last())
            .map(|m| m.content.as_str())
            .unwrap_or_default()
    }
}

/// Render a plan for one grid cell.
///
/// Augmentation messages precede the instruction in table column order:
/// description, domain model, explanation / generated-model placeholder.
/// Batch delivery takes the full task list; chained and isolated delivery
/// take exactly one task per call.
pub fn render(
    spec: &TemplateSpec,
    delivery: DeliveryMode,
    domain: &Domain,
    tasks: &[&CodingTask],
    language: TargetLanguage,
) -> Result<PromptPlan, PromptError> {
    if tasks.is_empty() {
        return Err(PromptError::EmptyTasks);
    }
    if delivery != DeliveryMode::Op1Batch && tasks.len() != 1 {
        return Err(PromptError::OneTaskPerPlan(delivery, tasks.len()));
    }

    let missing = |component: &'static str| PromptError::MissingComponent {
        template: spec.id,
        component,
        domain: domain.id.clone(),
    };

    let description = if spec.include_description {
        let text = domain.description_nl.as_deref().ok_or_else(|| missing("description_nl"))?;
        Some(Message::user(
            templates::DOMAIN_DESCRIPTION.replace("{DOMAIN_DESCRIPTION}", text),
        ))
    } else {
        None
    };

    let model = match spec.domain_model_form {
        ModelForm::None => None,
        ModelForm::Formal => {
            let text = domain.model_formal.as_deref().ok_or_else(|| missing("model_formal"))?;
            Some(Message::user(templates::DOMAIN_MODEL_FORMAL.replace("{DOMAIN_MODEL}", text)))
        }
        ModelForm::Nl => {
            let text = domain.model_nl.as_deref().ok_or_else(|| missing("model_nl"))?;
            Some(Message::user(templates::DOMAIN_MODEL_NL.replace("{DOMAIN_MODEL}", text)))
        }
    };

    let instruction = Message::user(build_instruction(delivery, tasks, language));
    let chain_context = (delivery == DeliveryMode::Op2Chained)
        .then(|| Message::assistant(CHAIN_CONTEXT_PLACEHOLDER));

    let mut rounds = Vec::new();
    if spec.explain_dm {
        let model = model.expect("explain templates supply a model form");
        rounds.push(vec![model, Message::user(templates::EXPLAIN_REQUEST)]);
        let mut last = vec![Message::user(templates::EXPLANATION_CONTEXT)];
        last.extend(chain_context);
        last.push(instruction);
        rounds.push(last);
    } else if spec.code_dm != ModelForm::None {
        let request = match spec.code_dm {
            ModelForm::Nl => templates::CODE_DM_NL_REQUEST,
            ModelForm::Formal => templates::CODE_DM_FORMAL_REQUEST,
            ModelForm::None => unreachable!(),
        };
        let description = description.expect("code-dm templates include the description");
        rounds.push(vec![description, Message::user(request)]);
        let mut last = vec![Message::user(templates::CODED_MODEL_CONTEXT)];
        last.extend(chain_context);
        last.push(instruction);
        rounds.push(last);
    } else {
        let mut round = Vec::new();
        round.extend(description);
        round.extend(model);
        round.extend(chain_context);
        round.push(instruction);
        rounds.push(round);
    }

    debug_assert_eq!(rounds.len(), spec.rounds);
    let expects_outputs = if delivery == DeliveryMode::Op1Batch { tasks.len() } else { 1 };
    Ok(PromptPlan { rounds, expects_outputs })
}

fn build_instruction(
    delivery: DeliveryMode,
    tasks: &[&CodingTask],
    language: TargetLanguage,
) -> String {
    let mut out = format!("{INSTRUCTION_PREFIX} {}:", language.prompt_name());
    if delivery == DeliveryMode::Op1Batch && tasks.len() > 1 {
        for (i, task) in tasks.iter().enumerate() {
            out.push_str(&format!("\n{}. {}", i + 1, task.spec_nl));
        }
        out.push('\n');
        out.push_str(templates::BATCH_FORMAT);
    } else {
        out.push('\n');
        out.push_str(&tasks[0].spec_nl);
    }
    match language {
        TargetLanguage::Alloy => {
            out.push('\n');
            out.push_str(templates::SHAPE_ALLOY);
        }
        TargetLanguage::Python => {
            out.push('\n');
            out.push_str(templates::SHAPE_PYTHON);
        }
        TargetLanguage::Ocl => {}
    }
    out
}

/// Replace `{{ROUND1_REPLY}}` in a round's messages with the live reply.
pub fn splice_round1_reply(round: &[Message], reply: &str) -> Vec<Message> {
    round
        .iter()
        .map(|m| Message {
            role: m.role,
            content: m.content.replace(ROUND1_REPLY_PLACEHOLDER, reply),
        })
        .collect()
}

/// Replace the chained-delivery context placeholder with prior snippets, or
/// drop the message entirely for the first task of a chain.
pub fn splice_chain_context(round: &[Message], context: Option<&str>) -> Vec<Message> {
    round
        .iter()
        .filter_map(|m| {
            if m.content.contains(CHAIN_CONTEXT_PLACEHOLDER) {
                context.map(|ctx| Message {
                    role: m.role,
                    content: m.content.replace(CHAIN_CONTEXT_PLACEHOLDER, ctx),
                })
            } else {
                Some(m.clone())
            }
        })
        .collect()
}

fn message_words(content: &str) -> usize {
    content
        .replace(ROUND1_REPLY_PLACEHOLDER, " ")
        .replace(CHAIN_CONTEXT_PLACEHOLDER, " ")
        .split_whitespace()
        .count()
}

/// Whitespace token count over a plan's static content; placeholders count
/// zero. Additive over message concatenation.
pub fn estimate_words(plan: &PromptPlan) -> usize {
    plan.rounds.iter().flatten().map(|m| message_words(&m.content)).sum()
}

/// Words contributed by the augmentation components alone, i.e. everything
/// except the final instruction. This is the per-template size the token
/// report tabulates, and it is exactly additive across templates that share
/// components.
pub fn augmentation_words(plan: &PromptPlan) -> usize {
    estimate_words(plan) - message_words(plan.final_instruction())
}
