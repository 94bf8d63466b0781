//! Shared harness for the integration and acceptance suites: a scripted
//! transport that plays the roles of generator, judge and repairer with a
//! fixed, deterministic policy keyed on prompt content and call occurrence.

#![allow(dead_code)]

use dslbench::gateway::{ProviderConfig, Transport, TransportError, TransportRequest};
use dslbench::orchestrator::RunConfig;
use dslbench::prompting::{DeliveryMode, TemplateId};
use dslbench::TargetLanguage;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub fn fixture_dataset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")
}

pub fn provider(name: &str) -> ProviderConfig {
    ProviderConfig {
        name: name.into(),
        endpoint_url: format!("http://localhost/{name}/v1/chat/completions"),
        model_id: format!("{name}-model"),
        temperature: 0.3,
        max_context_tokens: 100_000,
        api_key_env: String::new(),
        timeout_s: 5,
        max_retries: 0,
        retry_backoff_ms: 0,
    }
}

/// The acceptance-suite grid: 2 domains, 6 tasks, 3 templates, batch and
/// isolated delivery, k = 3, both repairs on, deterministic.
pub fn acceptance_config(run_id: &str) -> RunConfig {
    RunConfig {
        run_id: run_id.into(),
        dataset_root: fixture_dataset(),
        languages: vec![TargetLanguage::Ocl, TargetLanguage::Alloy, TargetLanguage::Python],
        providers: vec![provider("gen")],
        judge: ProviderConfig { temperature: 0.0, ..provider("judge") },
        templates: vec![TemplateId::PT1, TemplateId::PT4, TemplateId::PT8],
        delivery_modes: vec![DeliveryMode::Op1Batch, DeliveryMode::Op3Isolated],
        attempts_k: 3,
        wf_repair: true,
        correctness_repair: true,
        wf_repair_mode: Default::default(),
        repair_provider: None,
        wf_validator: Default::default(),
        parallelism: 1,
        deterministic: true,
        rate_limit_rpm: None,
        external_validator_parallelism: None,
    }
}

const TASK_IDS: [&str; 6] =
    ["t-acc-1", "t-acc-2", "t-acc-3", "t-com-1", "t-com-2", "t-com-3"];

fn task_index(task_id: &str) -> usize {
    // 1-based index within its domain.
    task_id.rsplit('-').next().unwrap().parse().unwrap()
}

fn language_of(prompt: &str) -> TargetLanguage {
    if prompt.contains("in OCL:") || prompt.contains("The following OCL code") {
        TargetLanguage::Ocl
    } else if prompt.contains("in Alloy:") || prompt.contains("The following Alloy code") {
        TargetLanguage::Alloy
    } else {
        TargetLanguage::Python
    }
}

fn tasks_in(prompt: &str) -> Vec<&'static str> {
    let specs = [
        ("t-acc-1", "A rear-end collision must involve exactly two vehicles."),
        ("t-acc-2", "Every accident must involve at least one vehicle."),
        ("t-acc-3", "The number of fatal victims of an accident cannot be negative."),
        ("t-com-1", "The number of employees of the company must be less than or equal to 50."),
        ("t-com-2", "Every employee must be at least 18 years old."),
        ("t-com-3", "Each department must have at least one employee."),
    ];
    specs.iter().filter(|(_, s)| prompt.contains(s)).map(|(id, _)| *id).collect()
}

fn comment(language: TargetLanguage, text: &str) -> String {
    match language {
        TargetLanguage::Ocl => format!("-- {text}"),
        TargetLanguage::Alloy => format!("// {text}"),
        TargetLanguage::Python => format!("# {text}"),
    }
}

/// A well-formed, judge-approved snippet tagged with its task and variant.
pub fn good_snippet(language: TargetLanguage, task_id: &str, tag: &str) -> String {
    let marker = comment(language, &format!("tid:{task_id} {tag}"));
    let body = match language {
        TargetLanguage::Ocl => {
            "context Accident inv: self.type = 'rear-end collision' implies self.crashedVehicles->size() = 2"
        }
        TargetLanguage::Alloy => {
            "fact Check { all a: Accident | a.kind = RearEnd implies #a.crashedVehicles = 2 }"
        }
        TargetLanguage::Python => {
            "def check_constraint(accidents):\n    for accident in accidents:\n        if accident['type'] == 'rear end collision' and len(accident['crashed_vehicles']) != 2:\n            return False\n    return True"
        }
    };
    format!("{marker}\n{body}")
}

/// Ill-formed under the builtin validator; `stubborn` survives repair.
fn broken_snippet(language: TargetLanguage, task_id: &str, tag: &str, stubborn: bool) -> String {
    let flag = if stubborn { " wf:stubborn" } else { "" };
    let marker = comment(language, &format!("tid:{task_id} {tag}{flag}"));
    let body = match language {
        TargetLanguage::Ocl => "context Accident inv self.type = 1",
        TargetLanguage::Alloy => "fact Broken { all a: Accident | #a.crashedVehicles = 2",
        TargetLanguage::Python => "def check_constraint(accidents)\n    return True",
    };
    format!("{marker}\n{body}")
}

/// Well-formed but semantically flawed; the judge rejects it. `stubborn`
/// flaws survive correctness repair.
fn flawed_snippet(language: TargetLanguage, task_id: &str, tag: &str, stubborn: bool) -> String {
    let flaw = if stubborn { "flaw:stubborn" } else { "flaw:cardinality" };
    let marker = comment(language, &format!("tid:{task_id} {tag} {flaw}"));
    let body = match language {
        TargetLanguage::Ocl => "context Accident inv: self.crashedVehicles->size() = 3",
        TargetLanguage::Alloy => "fact Check { all a: Accident | #a.crashedVehicles = 3 }",
        TargetLanguage::Python => {
            "def check_constraint(accidents):\n    return len(accidents) == 3"
        }
    };
    format!("{marker}\n{body}")
}

/// The scripted per-(task, attempt) outcome plan:
///   task 1: attempt 1 good, attempt 2 broken (repairable), attempt 3 flawed (fixable)
///   task 2: attempt 1 flawed-stubborn, attempt 2 good, attempt 3 flawed (fixable)
///   task 3: attempt 1 good, attempt 2 broken-stubborn (stays ill-formed), attempt 3 good
fn generation_snippet(language: TargetLanguage, task_id: &str, occurrence: usize) -> String {
    let tag = format!("a:{occurrence}");
    match (task_index(task_id), occurrence) {
        (1, 2) => broken_snippet(language, task_id, &tag, false),
        (1, 3) => flawed_snippet(language, task_id, &tag, false),
        (2, 1) => flawed_snippet(language, task_id, &tag, true),
        (2, 3) => flawed_snippet(language, task_id, &tag, false),
        (3, 2) => broken_snippet(language, task_id, &tag, true),
        _ => good_snippet(language, task_id, &tag),
    }
}

fn fence_lang(language: TargetLanguage) -> &'static str {
    match language {
        TargetLanguage::Ocl => "ocl",
        TargetLanguage::Alloy => "alloy",
        TargetLanguage::Python => "python",
    }
}

fn fenced(language: TargetLanguage, code: &str) -> String {
    format!("```{}\n{code}\n```", fence_lang(language))
}

fn extract_section<'a>(prompt: &'a str, start: &str, end: &str) -> &'a str {
    let from = prompt.find(start).map(|i| i + start.len()).unwrap_or(0);
    let to = prompt[from..].find(end).map(|i| from + i).unwrap_or(prompt.len());
    &prompt[from..to]
}

fn section_task(section: &str) -> &'static str {
    for id in TASK_IDS {
        if section.contains(&format!("tid:{id}")) {
            return id;
        }
    }
    "t-acc-1"
}

/// Deterministic stand-in for every provider in the fixture runs.
pub struct ResponderTransport {
    occurrences: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl ResponderTransport {
    pub fn new() -> Self {
        ResponderTransport { occurrences: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn respond(&self, prompt: &str, occurrence: usize) -> String {
        // Round-1 augmentation requests.
        if prompt.contains("Explain this domain model.") {
            return "The model captures the domain entities, their attributes and the \
                    associations connecting them."
                .into();
        }
        if prompt.contains("Generate a domain model") {
            return "Entities: the ones from the description, with their natural associations."
                .into();
        }

        // Judge.
        if prompt.contains("Decide whether the code correctly implements the specification.") {
            let code = extract_section(prompt, "Code to be evaluated:", "Decide whether");
            return if code.contains("flaw:stubborn") {
                "VERDICT: INCORRECT\nThe logic is wrong in a way feedback does not pin down."
                    .into()
            } else if code.contains("flaw:cardinality") {
                "VERDICT: INCORRECT\nThe cardinality is wrong; the specification requires a different count."
                    .into()
            } else {
                "VERDICT: CORRECT\nThe code matches the specification.".into()
            };
        }

        // Well-formedness repair, explain call.
        if prompt.contains("Explain the error.") {
            return "The code is missing a required syntactic token.".into();
        }
        // Well-formedness repair, fix call (two-call mode) or single prompt.
        if prompt.contains("Explanation of the error:") || prompt.contains("First explain the error")
        {
            let language = language_of(prompt);
            let code = extract_section(prompt, "Code:", "Error:");
            let task_id = section_task(code);
            if code.contains("wf:stubborn") {
                return fenced(
                    language,
                    &broken_snippet(language, task_id, "wf-retry", true),
                );
            }
            return fenced(language, &good_snippet(language, task_id, "wf-repaired"));
        }

        // Correctness repair.
        if prompt.contains("does not correctly implement its specification") {
            let language = language_of(prompt);
            let code = extract_section(prompt, "Code:", "Feedback from the correctness check:");
            let task_id = section_task(code);
            if code.contains("flaw:stubborn") {
                return fenced(
                    language,
                    &flawed_snippet(language, task_id, "fix-retry", true),
                );
            }
            return fenced(language, &good_snippet(language, task_id, "fixed"));
        }

        // Generation.
        if prompt.contains("Code the following constraint in") {
            let language = language_of(prompt);
            let tasks = tasks_in(prompt);
            if tasks.len() > 1 {
                let blocks: Vec<String> = tasks
                    .iter()
                    .enumerate()
                    .map(|(i, task_id)| {
                        format!(
                            "{}. Constraint {}\n{}",
                            i + 1,
                            i + 1,
                            fenced(language, &generation_snippet(language, task_id, occurrence))
                        )
                    })
                    .collect();
                return blocks.join("\n");
            }
            let task_id = tasks.first().copied().unwrap_or("t-acc-1");
            return format!(
                "Here is the constraint:\n{}",
                fenced(language, &generation_snippet(language, task_id, occurrence))
            );
        }

        "I do not understand the request.".into()
    }
}

impl Default for ResponderTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for ResponderTransport {
    fn send(&self, request: &TransportRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt: String = request
            .body
            .get("messages")
            .and_then(|m| m.as_array())
            .map(|messages| {
                messages
                    .iter()
                    .filter_map(|m| m.get("content").and_then(|c| c.as_str()))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default();

        let occurrence = {
            let mut map = self.occurrences.lock().unwrap();
            let counter = map.entry(prompt.clone()).or_insert(0);
            *counter += 1;
            *counter
        };
        let text = self.respond(&prompt, occurrence);
        Ok(serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2},
        })
        .to_string())
    }
}

/// Count transport sends without answering anything; replay-mode runs must
/// never reach it.
pub struct CountingTransport(pub AtomicUsize);

impl CountingTransport {
    pub fn new() -> Self {
        CountingTransport(AtomicUsize::new(0))
    }

    pub fn calls(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

impl Default for CountingTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for CountingTransport {
    fn send(&self, _request: &TransportRequest) -> Result<String, TransportError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Fatal("counting transport answers nothing".into()))
    }
}
