//! End-to-end pipeline execution over the configuration grid.
//!
//! Every (language, provider, template, delivery, domain) cell is an
//! independent experiment: render, sample k attempts, extract/split, check
//! well-formedness (repairing once if enabled), judge, repair correctness
//! once and re-judge. Each attempt appends an immutable record to the run
//! store, so interrupted runs resume by skipping completed tuples.

mod store;

pub use store::{
    config_hash, ExchangePurpose, LoggedExchange, RunStore, StoreWriter, ATTEMPTS_FILE,
    CONFIG_FILE, EXCHANGES_FILE,
};

use crate::codeproc::{self, Snippet, SnippetOrigin};
use crate::dataset::{self, CodingTask, Dataset, DatasetError, Domain};
#[cfg(feature = "http")]
use crate::gateway::HttpTransport;
use crate::gateway::{Gateway, GatewayError, ProviderConfig};
use crate::judging::{self, JudgeError, Verdict};
use crate::metrics::TaskOutcome;
use crate::prompting::{self, DeliveryMode, PromptError, PromptPlan, TemplateId};
use crate::repair::{self, RepairError, RepairRecord, WfRepairMode};
use crate::validation::{
    self, LanguageValidatorConfig, ValidationError, ValidatorRegistry, WfResult,
};
use crate::TargetLanguage;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("config hash mismatch: store has {expected}, supplied config hashes to {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("corrupt run store: {0}")]
    CorruptStore(String),
    #[error("no run store at {0}")]
    MissingStore(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_parallelism() -> usize {
    4
}
fn default_attempts() -> usize {
    1
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub dataset_root: PathBuf,
    pub languages: Vec<TargetLanguage>,
    pub providers: Vec<ProviderConfig>,
    /// Exactly one judge configuration per run, shared by every language.
    pub judge: ProviderConfig,
    pub templates: Vec<TemplateId>,
    pub delivery_modes: Vec<DeliveryMode>,
    #[serde(default = "default_attempts")]
    pub attempts_k: usize,
    #[serde(default)]
    pub wf_repair: bool,
    #[serde(default)]
    pub correctness_repair: bool,
    #[serde(default)]
    pub wf_repair_mode: WfRepairMode,
    /// Repair provider; defaults to the generating provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_provider: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub wf_validator: BTreeMap<String, LanguageValidatorConfig>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Zero timestamps and process cells in canonical order so replayed
    /// runs produce byte-identical stores.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_rpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_validator_parallelism: Option<usize>,
}

impl RunConfig {
    /// Validate and normalize. The judge temperature is pinned to 0.0 for
    /// reproducible verdicts.
    pub fn validated(mut self) -> Result<Self, OrchestratorError> {
        if self.run_id.trim().is_empty()
            || self.run_id.contains('/')
            || self.run_id.contains('\\')
        {
            return Err(OrchestratorError::InvalidConfig(
                "run_id must be a non-empty path-safe name".into(),
            ));
        }
        if self.attempts_k < 1 {
            return Err(OrchestratorError::InvalidConfig("attempts_k must be >= 1".into()));
        }
        if self.languages.is_empty()
            || self.providers.is_empty()
            || self.templates.is_empty()
            || self.delivery_modes.is_empty()
        {
            return Err(OrchestratorError::InvalidConfig(
                "languages, providers, templates and delivery_modes must be non-empty".into(),
            ));
        }
        let mut names = BTreeSet::new();
        for provider in &self.providers {
            provider.validate()?;
            if !names.insert(provider.name.clone()) {
                return Err(OrchestratorError::InvalidConfig(format!(
                    "duplicate provider name '{}'",
                    provider.name
                )));
            }
        }
        self.judge.validate()?;
        self.judge.temperature = 0.0;
        if let Some(ref provider) = self.repair_provider {
            provider.validate()?;
        }
        if self.parallelism < 1 {
            return Err(OrchestratorError::InvalidConfig("parallelism must be >= 1".into()));
        }
        ValidatorRegistry::from_config(&self.wf_validator)?;
        Ok(self)
    }

    pub fn from_json(raw: &str) -> Result<Self, OrchestratorError> {
        let config: RunConfig = serde_json::from_str(raw)
            .map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))?;
        config.validated()
    }
}

/// Where gateway traffic comes from during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum GatewaySetup {
    Live,
    Record(PathBuf),
    Replay(PathBuf),
}

/// Identifying coordinates of one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptIds {
    pub run_id: String,
    pub domain_id: String,
    pub task_id: String,
    pub language: TargetLanguage,
    pub provider: String,
    pub template: TemplateId,
    pub delivery: DeliveryMode,
    pub attempt_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    WfFailed,
    Incorrect,
    Correct,
    Error,
}

/// Everything the pipeline produced for one (task, attempt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_id: String,
    pub ids: AttemptIds,
    pub prompt_plan: PromptPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    pub generation_exchange_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<Snippet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_violation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf_initial: Option<WfResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf_repair: Option<RepairRecord>,
    /// Well-formedness repair was attempted but produced no code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf_repair_failed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf_final: Option<WfResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_initial: Option<Verdict>,
    #[serde(default)]
    pub judge_unparseable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_repair: Option<RepairRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_repair_failed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_final: Option<Verdict>,
    pub status: AttemptStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

impl AttemptRecord {
    /// The verdict that decides the attempt's fate: post-repair when a
    /// correctness repair ran, the initial one otherwise.
    pub fn effective_verdict(&self) -> Option<&Verdict> {
        self.verdict_final.as_ref().or(self.verdict_initial.as_ref())
    }

    pub fn wf_passed(&self) -> bool {
        self.wf_final.as_ref().map(|r| r.passed).unwrap_or(false)
    }
}

/// One grid cell: the experiment coordinates short of task and attempt.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub language: TargetLanguage,
    pub provider: String,
    pub template: TemplateId,
    pub delivery: DeliveryMode,
    pub domain_id: String,
}

impl CellKey {
    pub fn render(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.language.key(),
            self.provider,
            self.template,
            self.delivery.key(),
            self.domain_id
        )
    }
}

pub fn attempt_id(ids: &AttemptIds) -> String {
    format!(
        "{}/{}/{}/{}/{}/{}/{}/a{}",
        ids.run_id,
        ids.language.key(),
        ids.provider,
        ids.template,
        ids.delivery.key(),
        ids.domain_id,
        ids.task_id,
        ids.attempt_index
    )
}

/// A schedulable unit: one cell with the tasks it covers. Batch and chained
/// cells keep all their tasks together; isolated cells get one unit per task.
struct WorkUnit {
    cell: CellKey,
    provider_index: usize,
    task_ids: Vec<String>,
}

fn now_millis(deterministic: bool) -> u64 {
    if deterministic {
        0
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Execute (or resume) a run end-to-end with the default HTTP transport.
#[cfg(feature = "http")]
pub fn run(
    config: &RunConfig,
    store_root: &Path,
    gateway_setup: &GatewaySetup,
) -> Result<RunStore, OrchestratorError> {
    let gateway = match gateway_setup {
        GatewaySetup::Live => {
            Gateway::live(Arc::new(HttpTransport::new()), config.rate_limit_rpm)
        }
        GatewaySetup::Record(dir) => {
            Gateway::record(dir, Arc::new(HttpTransport::new()), config.rate_limit_rpm)?
        }
        GatewaySetup::Replay(dir) => Gateway::replay(dir)?,
    };
    run_with_gateway(config, store_root, &gateway)
}

/// Resume an interrupted run from its stored config.
#[cfg(feature = "http")]
pub fn resume(
    store_root: &Path,
    run_id: &str,
    gateway_setup: &GatewaySetup,
) -> Result<RunStore, OrchestratorError> {
    let existing = RunStore::load(store_root, run_id)?;
    run(&existing.config, store_root, gateway_setup)
}

/// Execute a run against an injected gateway (tests drive scripted and
/// counting transports through this).
pub fn run_with_gateway(
    config: &RunConfig,
    store_root: &Path,
    gateway: &Gateway,
) -> Result<RunStore, OrchestratorError> {
    let config = config.clone().validated()?;
    if let Some(limit) = config.external_validator_parallelism {
        validation::set_subprocess_limit(limit);
    }
    let dataset = dataset::load_dataset(&config.dataset_root)?;
    let registry = ValidatorRegistry::from_config(&config.wf_validator)?;

    let run_dir = store_root.join(&config.run_id);
    let mut writer = StoreWriter::create(&run_dir, &config)?;

    // Resume bookkeeping: a (cell, task, attempt) already in the store is
    // never re-run; prior records also prime chained-delivery context.
    let existing: Vec<AttemptRecord> = if run_dir.join(ATTEMPTS_FILE).exists() {
        RunStore::load(store_root, &config.run_id)?.records
    } else {
        Vec::new()
    };
    let done: BTreeSet<String> = existing.iter().map(|r| r.attempt_id.clone()).collect();
    let existing: Arc<Vec<AttemptRecord>> = Arc::new(existing);

    let units = build_units(&config, &dataset);
    let pending: Vec<&WorkUnit> = units
        .iter()
        .filter(|unit| !unit_is_done(unit, &config, &done))
        .collect();

    // Batch attempts write one record per task; a store cut inside such a
    // group cannot be resumed safely.
    for unit in &pending {
        for keys in unit_resume_groups(unit, &config) {
            let done_count = keys.iter().filter(|k| done.contains(*k)).count();
            if done_count > 0 && done_count < keys.len() {
                return Err(OrchestratorError::CorruptStore(format!(
                    "cell {} has a partially written batch attempt; the store cannot be resumed",
                    unit.cell.render()
                )));
            }
        }
    }

    let context = PipelineContext {
        config: &config,
        dataset: &dataset,
        registry: &registry,
        gateway,
        existing: existing.clone(),
        done: &done,
    };

    if config.deterministic || config.parallelism == 1 || pending.len() <= 1 {
        for unit in pending {
            for output in process_unit(&context, unit) {
                write_output(&mut writer, &output)?;
            }
        }
    } else {
        run_parallel(&context, &pending, &mut writer, config.parallelism)?;
    }

    RunStore::load(store_root, &config.run_id)
}

fn write_output(writer: &mut StoreWriter, output: &UnitOutput) -> Result<(), OrchestratorError> {
    for logged in &output.exchanges {
        writer.append_exchange(logged)?;
    }
    for record in &output.records {
        writer.append_attempt(record)?;
    }
    Ok(())
}

struct PipelineContext<'a> {
    config: &'a RunConfig,
    dataset: &'a Dataset,
    registry: &'a ValidatorRegistry,
    gateway: &'a Gateway,
    existing: Arc<Vec<AttemptRecord>>,
    done: &'a BTreeSet<String>,
}

#[derive(Default)]
struct UnitOutput {
    records: Vec<AttemptRecord>,
    exchanges: Vec<LoggedExchange>,
}

fn run_parallel(
    context: &PipelineContext<'_>,
    pending: &[&WorkUnit],
    writer: &mut StoreWriter,
    parallelism: usize,
) -> Result<(), OrchestratorError> {
    let queue: Mutex<VecDeque<&WorkUnit>> = Mutex::new(pending.iter().copied().collect());
    let (sender, receiver) = mpsc::channel::<UnitOutput>();
    let worker_count = parallelism.min(pending.len());

    std::thread::scope(|scope| -> Result<(), OrchestratorError> {
        for _ in 0..worker_count {
            let sender = sender.clone();
            let queue = &queue;
            let context_ref = &*context;
            scope.spawn(move || loop {
                let unit = queue.lock().unwrap().pop_front();
                match unit {
                    Some(unit) => {
                        for output in process_unit(context_ref, unit) {
                            if sender.send(output).is_err() {
                                return;
                            }
                        }
                    }
                    None => break,
                }
            });
        }
        drop(sender);

        // Single writer sequenced behind the channel.
        for output in receiver {
            write_output(writer, &output)?;
        }
        Ok(())
    })
}

fn build_units(config: &RunConfig, dataset: &Dataset) -> Vec<WorkUnit> {
    let mut units = Vec::new();
    for language in &config.languages {
        for (provider_index, provider) in config.providers.iter().enumerate() {
            for template in &config.templates {
                for delivery in &config.delivery_modes {
                    for domain in &dataset.domains {
                        let cell = CellKey {
                            language: *language,
                            provider: provider.name.clone(),
                            template: *template,
                            delivery: *delivery,
                            domain_id: domain.id.clone(),
                        };
                        let task_ids = domain.task_ids.clone();
                        if task_ids.is_empty() {
                            continue;
                        }
                        match delivery {
                            DeliveryMode::Op3Isolated => {
                                for task_id in task_ids {
                                    units.push(WorkUnit {
                                        cell: cell.clone(),
                                        provider_index,
                                        task_ids: vec![task_id],
                                    });
                                }
                            }
                            _ => units.push(WorkUnit { cell, provider_index, task_ids }),
                        }
                    }
                }
            }
        }
    }
    units
}

fn key_for(unit: &WorkUnit, config: &RunConfig, task_id: &str, attempt_index: usize) -> String {
    attempt_id(&AttemptIds {
        run_id: config.run_id.clone(),
        domain_id: unit.cell.domain_id.clone(),
        task_id: task_id.to_string(),
        language: unit.cell.language,
        provider: unit.cell.provider.clone(),
        template: unit.cell.template,
        delivery: unit.cell.delivery,
        attempt_index,
    })
}

/// The atomic resume groups of a unit. A batch attempt covers every task in
/// the batch at once; otherwise each (task, attempt) stands alone.
fn unit_resume_groups(unit: &WorkUnit, config: &RunConfig) -> Vec<Vec<String>> {
    match unit.cell.delivery {
        DeliveryMode::Op1Batch => (1..=config.attempts_k)
            .map(|attempt| {
                unit.task_ids.iter().map(|t| key_for(unit, config, t, attempt)).collect()
            })
            .collect(),
        _ => unit
            .task_ids
            .iter()
            .flat_map(|t| {
                (1..=config.attempts_k).map(move |attempt| vec![key_for(unit, config, t, attempt)])
            })
            .collect(),
    }
}

fn unit_is_done(unit: &WorkUnit, config: &RunConfig, done: &BTreeSet<String>) -> bool {
    unit_resume_groups(unit, config)
        .iter()
        .all(|keys| keys.iter().all(|k| done.contains(k)))
}

fn process_unit(context: &PipelineContext<'_>, unit: &WorkUnit) -> Vec<UnitOutput> {
    let domain = context
        .dataset
        .domain(&unit.cell.domain_id)
        .expect("unit domains come from the dataset");
    let mut outputs = Vec::new();

    match unit.cell.delivery {
        DeliveryMode::Op1Batch => {
            let tasks: Vec<&CodingTask> = unit
                .task_ids
                .iter()
                .map(|id| context.dataset.task(id).expect("unit tasks come from the dataset"))
                .collect();
            process_plan(context, unit, domain, &tasks, None, &mut outputs);
        }
        DeliveryMode::Op3Isolated => {
            let task = context
                .dataset
                .task(&unit.task_ids[0])
                .expect("unit tasks come from the dataset");
            process_plan(context, unit, domain, &[task], None, &mut outputs);
        }
        DeliveryMode::Op2Chained => {
            // Chained: task i carries the attempt-1 snippets of tasks 1..i,
            // in task file order. The first task sees no prior context.
            let mut chain: Vec<String> = Vec::new();
            for task_id in &unit.task_ids {
                let task =
                    context.dataset.task(task_id).expect("unit tasks come from the dataset");
                let chain_text = if chain.is_empty() { None } else { Some(chain.join("\n\n")) };

                let before = outputs.len();
                process_plan(context, unit, domain, &[task], chain_text.as_deref(), &mut outputs);

                // Feed the chain from this task's attempt-1 snippet, whether
                // freshly produced or resumed from the store.
                let fresh = outputs[before..]
                    .iter()
                    .flat_map(|o| o.records.iter())
                    .find(|r| r.ids.attempt_index == 1)
                    .and_then(|r| r.snippet.clone());
                let snippet = fresh.or_else(|| {
                    let key = key_for(unit, context.config, task_id, 1);
                    context
                        .existing
                        .iter()
                        .find(|r| r.attempt_id == key)
                        .and_then(|r| r.snippet.clone())
                });
                if let Some(snippet) = snippet {
                    chain.push(snippet.text);
                }
            }
        }
    }
    outputs
}

/// Render one plan and run all pending attempts of it, one output per
/// attempt so resume boundaries match what is on disk.
fn process_plan(
    context: &PipelineContext<'_>,
    unit: &WorkUnit,
    domain: &Domain,
    tasks: &[&CodingTask],
    chain_context: Option<&str>,
    outputs: &mut Vec<UnitOutput>,
) {
    let config = context.config;
    let provider = &config.providers[unit.provider_index];
    let spec = prompting::template_spec(unit.cell.template);
    let plan =
        match prompting::render(&spec, unit.cell.delivery, domain, tasks, unit.cell.language) {
            Ok(plan) => plan,
            Err(err) => {
                // Rendering fails attempt-independently (missing component):
                // record an error attempt per task and attempt index.
                for attempt_index in 1..=config.attempts_k {
                    if attempt_already_done(context, unit, tasks, attempt_index) {
                        continue;
                    }
                    let mut output = UnitOutput::default();
                    for task in tasks {
                        let ids = make_ids(config, unit, task, attempt_index);
                        output.records.push(error_record(
                            &ids,
                            PromptPlan { rounds: vec![], expects_outputs: tasks.len() },
                            format!("prompt rendering failed: {err}"),
                            config.deterministic,
                        ));
                    }
                    outputs.push(output);
                }
                return;
            }
        };

    for attempt_index in 1..=config.attempts_k {
        if attempt_already_done(context, unit, tasks, attempt_index) {
            continue;
        }
        let mut output = UnitOutput::default();
        run_attempt(
            context,
            unit,
            domain,
            tasks,
            provider,
            &plan,
            chain_context,
            attempt_index,
            &mut output,
        );
        outputs.push(output);
    }
}

fn attempt_already_done(
    context: &PipelineContext<'_>,
    unit: &WorkUnit,
    tasks: &[&CodingTask],
    attempt_index: usize,
) -> bool {
    tasks.iter().all(|task| {
        let key = attempt_id(&make_ids(context.config, unit, task, attempt_index));
        context.done.contains(&key)
    })
}

fn make_ids(
    config: &RunConfig,
    unit: &WorkUnit,
    task: &CodingTask,
    attempt_index: usize,
) -> AttemptIds {
    AttemptIds {
        run_id: config.run_id.clone(),
        domain_id: unit.cell.domain_id.clone(),
        task_id: task.id.clone(),
        language: unit.cell.language,
        provider: unit.cell.provider.clone(),
        template: unit.cell.template,
        delivery: unit.cell.delivery,
        attempt_index,
    }
}

fn error_record(
    ids: &AttemptIds,
    plan: PromptPlan,
    error: String,
    deterministic: bool,
) -> AttemptRecord {
    let now = now_millis(deterministic);
    AttemptRecord {
        attempt_id: attempt_id(ids),
        ids: ids.clone(),
        prompt_plan: plan,
        raw_output: None,
        generation_exchange_keys: Vec::new(),
        snippet: None,
        shape_violation: None,
        wf_initial: None,
        wf_repair: None,
        wf_repair_failed: None,
        wf_final: None,
        verdict_initial: None,
        judge_unparseable: false,
        correctness_repair: None,
        correctness_repair_failed: None,
        verdict_final: None,
        status: AttemptStatus::Error,
        error: Some(error),
        started_at_ms: now,
        finished_at_ms: now,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_attempt(
    context: &PipelineContext<'_>,
    unit: &WorkUnit,
    domain: &Domain,
    tasks: &[&CodingTask],
    provider: &ProviderConfig,
    plan: &PromptPlan,
    chain_context: Option<&str>,
    attempt_index: usize,
    output: &mut UnitOutput,
) {
    let config = context.config;
    let gateway = context.gateway;
    let started = now_millis(config.deterministic);
    let cell_context = unit.cell.render();

    // Execute the plan's rounds for this attempt.
    let mut generation_keys = Vec::new();
    let mut round1_reply: Option<String> = None;
    if plan.rounds.len() == 2 {
        match gateway.chat(provider, &plan.rounds[0], attempt_index) {
            Ok(exchange) => {
                generation_keys.push(exchange.key.clone());
                round1_reply = exchange.response_text.clone();
                output.exchanges.push(LoggedExchange {
                    purpose: ExchangePurpose::Generation,
                    context: cell_context.clone(),
                    exchange,
                });
            }
            Err(err) => {
                for task in tasks {
                    let ids = make_ids(config, unit, task, attempt_index);
                    output.records.push(error_record(
                        &ids,
                        plan.clone(),
                        format!("round 1 failed: {err}"),
                        config.deterministic,
                    ));
                }
                return;
            }
        }
    }

    let mut final_round = plan.rounds.last().expect("plans have rounds").clone();
    if let Some(reply) = round1_reply.as_deref() {
        final_round = prompting::splice_round1_reply(&final_round, reply);
    }
    if unit.cell.delivery == DeliveryMode::Op2Chained {
        final_round = prompting::splice_chain_context(&final_round, chain_context);
    }

    let raw = match gateway.chat(provider, &final_round, attempt_index) {
        Ok(exchange) => {
            generation_keys.push(exchange.key.clone());
            let text = exchange.response_text.clone().unwrap_or_default();
            output.exchanges.push(LoggedExchange {
                purpose: ExchangePurpose::Generation,
                context: cell_context.clone(),
                exchange,
            });
            text
        }
        Err(err) => {
            for task in tasks {
                let ids = make_ids(config, unit, task, attempt_index);
                output.records.push(error_record(
                    &ids,
                    plan.clone(),
                    format!("generation failed: {err}"),
                    config.deterministic,
                ));
            }
            return;
        }
    };

    // Extract one snippet per task.
    let snippet_texts: Result<Vec<String>, String> = if tasks.len() > 1 {
        codeproc::split_batch(&raw, tasks.len(), unit.cell.language)
            .map_err(|e| e.to_string())
    } else {
        codeproc::extract_code(&raw, unit.cell.language)
            .map(|text| vec![text])
            .map_err(|e| e.to_string())
    };

    let snippet_texts = match snippet_texts {
        Ok(texts) => texts,
        Err(message) => {
            // Extraction and splitting faults fail every task in the batch.
            for task in tasks {
                let ids = make_ids(config, unit, task, attempt_index);
                let mut record = error_record(
                    &ids,
                    plan.clone(),
                    message.clone(),
                    config.deterministic,
                );
                record.raw_output = Some(raw.clone());
                record.generation_exchange_keys = generation_keys.clone();
                record.started_at_ms = started;
                output.records.push(record);
            }
            return;
        }
    };

    for (task, text) in tasks.iter().zip(snippet_texts) {
        let ids = make_ids(config, unit, task, attempt_index);
        let record = evaluate_snippet(
            context,
            unit,
            domain,
            task,
            &ids,
            plan,
            &raw,
            &generation_keys,
            text,
            started,
            output,
        );
        output.records.push(record);
    }
}

/// Blocks C and D for one snippet: well-formedness (with optional single
/// repair), the judge gate, correctness repair and re-judge.
#[allow(clippy::too_many_arguments)]
fn evaluate_snippet(
    context: &PipelineContext<'_>,
    unit: &WorkUnit,
    domain: &Domain,
    task: &CodingTask,
    ids: &AttemptIds,
    plan: &PromptPlan,
    raw: &str,
    generation_keys: &[String],
    text: String,
    started: u64,
    output: &mut UnitOutput,
) -> AttemptRecord {
    let config = context.config;
    let gateway = context.gateway;
    let provider = &config.providers[unit.provider_index];
    let repair_provider = config.repair_provider.as_ref().unwrap_or(provider);
    let selection = context.registry.selection_for(unit.cell.language);
    let attempt_index = ids.attempt_index;
    let this_attempt = attempt_id(ids);

    let snippet =
        Snippet::new(text, unit.cell.language, task.id.clone(), attempt_index, SnippetOrigin::Initial);
    let shape = codeproc::shape_check(&snippet);
    let shape_violation = match shape {
        codeproc::ShapeCheck::Ok => None,
        codeproc::ShapeCheck::Violation(v) => Some(v),
    };

    let mut record = AttemptRecord {
        attempt_id: this_attempt.clone(),
        ids: ids.clone(),
        prompt_plan: plan.clone(),
        raw_output: Some(raw.to_string()),
        generation_exchange_keys: generation_keys.to_vec(),
        snippet: Some(snippet.clone()),
        shape_violation,
        wf_initial: None,
        wf_repair: None,
        wf_repair_failed: None,
        wf_final: None,
        verdict_initial: None,
        judge_unparseable: false,
        correctness_repair: None,
        correctness_repair_failed: None,
        verdict_final: None,
        status: AttemptStatus::Error,
        error: None,
        started_at_ms: started,
        finished_at_ms: 0,
    };

    let finish = |mut record: AttemptRecord, status: AttemptStatus| -> AttemptRecord {
        record.status = status;
        record.finished_at_ms = now_millis(config.deterministic);
        record
    };

    // Block C: well-formedness, single-pass repair on failure.
    let wf_initial = match validation::check_wf(&snippet, &selection) {
        Ok(result) => result,
        Err(err) => {
            record.error = Some(format!("well-formedness validator failed: {err}"));
            return finish(record, AttemptStatus::Error);
        }
    };
    record.wf_initial = Some(wf_initial.clone());

    let mut current_snippet = snippet;
    let mut wf_final = wf_initial.clone();
    if !wf_initial.passed && config.wf_repair {
        match repair::repair_wf(
            &current_snippet,
            &wf_initial.diagnostics_text(),
            plan.final_instruction(),
            gateway,
            repair_provider,
            config.wf_repair_mode,
            attempt_index,
        ) {
            Ok((repair_record, exchanges)) => {
                for exchange in exchanges {
                    output.exchanges.push(LoggedExchange {
                        purpose: ExchangePurpose::WfRepair,
                        context: this_attempt.clone(),
                        exchange,
                    });
                }
                match validation::check_wf(&repair_record.output_snippet, &selection) {
                    Ok(recheck) => {
                        current_snippet = repair_record.output_snippet.clone();
                        record.wf_repair = Some(repair_record);
                        wf_final = recheck;
                    }
                    Err(err) => {
                        record.wf_repair = Some(repair_record);
                        record.error =
                            Some(format!("well-formedness validator failed: {err}"));
                        return finish(record, AttemptStatus::Error);
                    }
                }
            }
            Err(RepairError::RepairFailed { exchanges }) => {
                for exchange in exchanges {
                    output.exchanges.push(LoggedExchange {
                        purpose: ExchangePurpose::WfRepair,
                        context: this_attempt.clone(),
                        exchange,
                    });
                }
                record.wf_repair_failed = Some("repair reply contained no code".into());
            }
            Err(err) => {
                record.error = Some(format!("well-formedness repair failed: {err}"));
                record.wf_final = Some(wf_final);
                return finish(record, AttemptStatus::Error);
            }
        }
    }
    record.wf_final = Some(wf_final.clone());

    if !wf_final.passed {
        return finish(record, AttemptStatus::WfFailed);
    }

    // Block D: judge, then single-pass correctness repair and re-judge.
    let verdict = match judging::judge(
        &current_snippet,
        task,
        domain,
        gateway,
        &config.judge,
        attempt_index,
    ) {
        Ok((verdict, exchanges)) => {
            for exchange in exchanges {
                output.exchanges.push(LoggedExchange {
                    purpose: ExchangePurpose::Judge,
                    context: this_attempt.clone(),
                    exchange,
                });
            }
            verdict
        }
        Err(JudgeError::JudgeUnparseable { exchanges }) => {
            for exchange in exchanges {
                output.exchanges.push(LoggedExchange {
                    purpose: ExchangePurpose::Judge,
                    context: this_attempt.clone(),
                    exchange,
                });
            }
            record.judge_unparseable = true;
            return finish(record, AttemptStatus::Incorrect);
        }
        Err(JudgeError::Gateway(err)) => {
            record.error = Some(format!("judge failed: {err}"));
            return finish(record, AttemptStatus::Error);
        }
    };
    record.verdict_initial = Some(verdict.clone());

    if verdict.correct {
        return finish(record, AttemptStatus::Correct);
    }
    if !config.correctness_repair {
        return finish(record, AttemptStatus::Incorrect);
    }

    match repair::repair_correctness(
        &current_snippet,
        &verdict.feedback,
        task,
        domain,
        plan.final_instruction(),
        gateway,
        repair_provider,
        attempt_index,
    ) {
        Ok((repair_record, exchanges)) => {
            for exchange in exchanges {
                output.exchanges.push(LoggedExchange {
                    purpose: ExchangePurpose::CorrectnessRepair,
                    context: this_attempt.clone(),
                    exchange,
                });
            }
            let repaired = repair_record.output_snippet.clone();
            record.correctness_repair = Some(repair_record);
            match judging::judge(&repaired, task, domain, gateway, &config.judge, attempt_index)
            {
                Ok((final_verdict, exchanges)) => {
                    for exchange in exchanges {
                        output.exchanges.push(LoggedExchange {
                            purpose: ExchangePurpose::Judge,
                            context: this_attempt.clone(),
                            exchange,
                        });
                    }
                    let status = if final_verdict.correct {
                        AttemptStatus::Correct
                    } else {
                        AttemptStatus::Incorrect
                    };
                    record.verdict_final = Some(final_verdict);
                    finish(record, status)
                }
                Err(JudgeError::JudgeUnparseable { exchanges }) => {
                    for exchange in exchanges {
                        output.exchanges.push(LoggedExchange {
                            purpose: ExchangePurpose::Judge,
                            context: this_attempt.clone(),
                            exchange,
                        });
                    }
                    record.judge_unparseable = true;
                    finish(record, AttemptStatus::Incorrect)
                }
                Err(JudgeError::Gateway(err)) => {
                    record.error = Some(format!("re-judge failed: {err}"));
                    finish(record, AttemptStatus::Error)
                }
            }
        }
        Err(RepairError::RepairFailed { exchanges }) => {
            for exchange in exchanges {
                output.exchanges.push(LoggedExchange {
                    purpose: ExchangePurpose::CorrectnessRepair,
                    context: this_attempt.clone(),
                    exchange,
                });
            }
            record.correctness_repair_failed = Some("repair reply contained no code".into());
            finish(record, AttemptStatus::Incorrect)
        }
        Err(err) => {
            record.error = Some(format!("correctness repair failed: {err}"));
            finish(record, AttemptStatus::Error)
        }
    }
}

/// One derived outcome row: a task's attempt fold inside one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedOutcome {
    pub cell: CellKey,
    pub outcome: TaskOutcome,
    /// Judge replies that stayed unparseable; counted incorrect above.
    pub judge_unparseable_count: usize,
}

/// Fold attempt records into per-(cell, task) outcomes for the metrics
/// kernel.
pub fn derive_outcomes(records: &[AttemptRecord]) -> Vec<DerivedOutcome> {
    let mut groups: BTreeMap<(CellKey, String), (TaskOutcome, usize)> = BTreeMap::new();
    for record in records {
        let cell = CellKey {
            language: record.ids.language,
            provider: record.ids.provider.clone(),
            template: record.ids.template,
            delivery: record.ids.delivery,
            domain_id: record.ids.domain_id.clone(),
        };
        let entry = groups.entry((cell, record.ids.task_id.clone())).or_insert_with(|| {
            (
                TaskOutcome {
                    task_id: record.ids.task_id.clone(),
                    n: 0,
                    c: 0,
                    c_after_repair: 0,
                    wf_count: 0,
                },
                0,
            )
        });
        entry.0.n += 1;
        if record.verdict_initial.as_ref().map(|v| v.correct).unwrap_or(false) {
            entry.0.c += 1;
        }
        if record.effective_verdict().map(|v| v.correct).unwrap_or(false) {
            entry.0.c_after_repair += 1;
        }
        if record.wf_passed() {
            entry.0.wf_count += 1;
        }
        if record.judge_unparseable {
            entry.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((cell, _), (outcome, unparseable))| DerivedOutcome {
            cell,
            outcome,
            judge_unparseable_count: unparseable,
        })
        .collect()
}

/// Render every plan a run would execute, without touching the gateway or
/// the store.
pub fn dry_run(config: &RunConfig) -> Result<Vec<(CellKey, PromptPlan)>, OrchestratorError> {
    let config = config.clone().validated()?;
    let dataset = dataset::load_dataset(&config.dataset_root)?;
    let mut plans = Vec::new();
    for unit in build_units(&config, &dataset) {
        let domain = dataset.domain(&unit.cell.domain_id).expect("domain exists");
        let tasks: Vec<&CodingTask> =
            unit.task_ids.iter().map(|id| dataset.task(id).expect("task exists")).collect();
        let spec = prompting::template_spec(unit.cell.template);
        match prompting::render(&spec, unit.cell.delivery, domain, &tasks, unit.cell.language) {
            Ok(plan) => plans.push((unit.cell.clone(), plan)),
            Err(err) => {
                return Err(OrchestratorError::Prompt(err));
            }
        }
    }
    Ok(plans)
}
