//! Pluggable well-formedness checking.
//!
//! Built-in subset validators cover the constraint-expression fragments the
//! datasets exercise; an external-command adapter plugs in full toolchains
//! (USE, Alloy Analyzer, a real interpreter) where available. Failed results
//! always carry at least one non-empty diagnostic because repair prompts
//! quote them verbatim.

mod alloy;
mod baseline;
mod ocl;

use crate::codeproc::Snippet;
use crate::TargetLanguage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("validator unavailable: {0}")]
    ValidatorUnavailable(String),
    #[error("external validator timed out after {0}s")]
    Timeout(u64),
    #[error("unknown language '{0}' in validator config")]
    UnknownLanguage(String),
    #[error("invalid validator config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One validator finding, quoted into repair prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        Diagnostic { message: message.into(), line: None }
    }

    pub fn at(message: impl Into<String>, line: usize) -> Self {
        Diagnostic { message: message.into(), line: Some(line) }
    }

    pub fn render(&self) -> String {
        match self.line {
            Some(line) => format!("line {line}: {}", self.message),
            None => self.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorKind {
    BuiltinSubset,
    ExternalCommand,
}

/// Well-formedness verdict. `passed` implies no diagnostics and vice versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfResult {
    pub passed: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub validator: ValidatorKind,
}

impl WfResult {
    fn from_diagnostics(diagnostics: Vec<Diagnostic>, validator: ValidatorKind) -> Self {
        WfResult { passed: diagnostics.is_empty(), diagnostics, validator }
    }

    /// Diagnostics flattened to the single-line form repair prompts consume.
    pub fn diagnostics_text(&self) -> String {
        self.diagnostics.iter().map(Diagnostic::render).collect::<Vec<_>>().join("\n")
    }
}

fn default_pass_exit_codes() -> Vec<i32> {
    vec![0]
}
fn default_external_timeout() -> u64 {
    30
}

/// Configuration for running a real toolchain over a snippet file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalValidatorConfig {
    /// Shell command with `{file}` substituted by the snippet path.
    pub command_template: String,
    #[serde(default = "default_pass_exit_codes")]
    pub pass_exit_codes: Vec<i32>,
    #[serde(default = "default_external_timeout")]
    pub timeout_s: u64,
}

impl ExternalValidatorConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.command_template.matches("{file}").count() != 1 {
            return Err(ValidationError::InvalidConfig(format!(
                "command template must contain '{{file}}' exactly once: {}",
                self.command_template
            )));
        }
        Ok(())
    }
}

/// Which validator to run for a snippet.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidatorSelection {
    Builtin,
    External(ExternalValidatorConfig),
}

/// Per-language validator configuration as written in the run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageValidatorConfig {
    pub kind: ValidatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalValidatorConfig>,
}

impl Default for LanguageValidatorConfig {
    fn default() -> Self {
        LanguageValidatorConfig { kind: ValidatorKind::BuiltinSubset, external: None }
    }
}

/// Validator selection per language, parsed from config with unknown
/// language keys rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidatorRegistry {
    configs: BTreeMap<TargetLanguage, LanguageValidatorConfig>,
}

impl ValidatorRegistry {
    pub fn from_config(
        raw: &BTreeMap<String, LanguageValidatorConfig>,
    ) -> Result<Self, ValidationError> {
        let mut configs = BTreeMap::new();
        for (key, config) in raw {
            let language: TargetLanguage = key
                .parse()
                .map_err(|_| ValidationError::UnknownLanguage(key.clone()))?;
            if config.kind == ValidatorKind::ExternalCommand {
                let external = config.external.as_ref().ok_or_else(|| {
                    ValidationError::InvalidConfig(format!(
                        "language '{key}' selects external_command but configures no command"
                    ))
                })?;
                external.validate()?;
            }
            configs.insert(language, config.clone());
        }
        Ok(ValidatorRegistry { configs })
    }

    /// Available validators for a language; the builtin is always present.
    pub fn list_validators(&self, language: TargetLanguage) -> Vec<ValidatorKind> {
        let mut kinds = vec![ValidatorKind::BuiltinSubset];
        if let Some(config) = self.configs.get(&language) {
            if config.external.is_some() {
                kinds.push(ValidatorKind::ExternalCommand);
            }
        }
        kinds
    }

    pub fn selection_for(&self, language: TargetLanguage) -> ValidatorSelection {
        match self.configs.get(&language) {
            Some(LanguageValidatorConfig {
                kind: ValidatorKind::ExternalCommand,
                external: Some(external),
            }) => ValidatorSelection::External(external.clone()),
            _ => ValidatorSelection::Builtin,
        }
    }
}

/// Check well-formedness of a snippet with the selected validator.
pub fn check_wf(
    snippet: &Snippet,
    selection: &ValidatorSelection,
) -> Result<WfResult, ValidationError> {
    match selection {
        ValidatorSelection::Builtin => Ok(check_builtin(&snippet.text, snippet.language)),
        ValidatorSelection::External(config) => run_external(snippet, config),
    }
}

/// Run the built-in subset validator for a language.
pub fn check_builtin(text: &str, language: TargetLanguage) -> WfResult {
    let diagnostics = match language {
        TargetLanguage::Ocl => ocl::validate(text),
        TargetLanguage::Alloy => alloy::validate(text),
        TargetLanguage::Python => baseline::validate(text),
    };
    WfResult::from_diagnostics(diagnostics, ValidatorKind::BuiltinSubset)
}

/// Bounded pool for external validator subprocesses.
struct SubprocessGate {
    permits: Mutex<usize>,
    available: Condvar,
}

static SUBPROCESS_GATE: OnceLock<SubprocessGate> = OnceLock::new();
static SUBPROCESS_LIMIT: AtomicU64 = AtomicU64::new(4);
static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Configure the external-validator subprocess pool (default 4). Takes
/// effect for gates created afterwards.
pub fn set_subprocess_limit(limit: usize) {
    SUBPROCESS_LIMIT.store(limit.max(1) as u64, Ordering::SeqCst);
}

fn gate() -> &'static SubprocessGate {
    SUBPROCESS_GATE.get_or_init(|| SubprocessGate {
        permits: Mutex::new(SUBPROCESS_LIMIT.load(Ordering::SeqCst) as usize),
        available: Condvar::new(),
    })
}

struct GatePermit;

impl GatePermit {
    fn acquire() -> GatePermit {
        let gate = gate();
        let mut permits = gate.permits.lock().unwrap();
        while *permits == 0 {
            permits = gate.available.wait(permits).unwrap();
        }
        *permits -= 1;
        GatePermit
    }
}

impl Drop for GatePermit {
    fn drop(&mut self) {
        let gate = gate();
        *gate.permits.lock().unwrap() += 1;
        gate.available.notify_one();
    }
}

fn snippet_extension(language: TargetLanguage) -> &'static str {
    match language {
        TargetLanguage::Ocl => "ocl",
        TargetLanguage::Alloy => "als",
        TargetLanguage::Python => "py",
    }
}

fn run_external(
    snippet: &Snippet,
    config: &ExternalValidatorConfig,
) -> Result<WfResult, ValidationError> {
    config.validate()?;
    let _permit = GatePermit::acquire();

    let path: PathBuf = std::env::temp_dir().join(format!(
        "dslbench-wf-{}-{}.{}",
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::SeqCst),
        snippet_extension(snippet.language)
    ));
    {
        let mut file = std::fs::File::create(&path)?;
        file.write_all(snippet.text.as_bytes())?;
    }
    let command = config.command_template.replace("{file}", &path.to_string_lossy());

    let result = run_with_timeout(&command, config.timeout_s);
    let _ = std::fs::remove_file(&path);
    let (exit_code, stderr) = result?;

    if exit_code == 127 {
        return Err(ValidationError::ValidatorUnavailable(format!(
            "command not found: {command}"
        )));
    }

    if config.pass_exit_codes.contains(&exit_code) {
        return Ok(WfResult::from_diagnostics(Vec::new(), ValidatorKind::ExternalCommand));
    }
    let mut diagnostics: Vec<Diagnostic> = stderr
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(Diagnostic::new)
        .collect();
    if diagnostics.is_empty() {
        diagnostics.push(Diagnostic::new(format!("validator exited with code {exit_code}")));
    }
    Ok(WfResult::from_diagnostics(diagnostics, ValidatorKind::ExternalCommand))
}

fn run_with_timeout(command: &str, timeout_s: u64) -> Result<(i32, String), ValidationError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| ValidationError::ValidatorUnavailable(e.to_string()))?;

    let deadline = Instant::now() + Duration::from_secs(timeout_s);
    loop {
        match child.try_wait()? {
            Some(status) => {
                let mut stderr = String::new();
                if let Some(mut pipe) = child.stderr.take() {
                    use std::io::Read;
                    let _ = pipe.read_to_string(&mut stderr);
                }
                return Ok((status.code().unwrap_or(-1), stderr));
            }
            None => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ValidationError::Timeout(timeout_s));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codeproc::SnippetOrigin;

    fn snippet(text: &str, language: TargetLanguage) -> Snippet {
        Snippet::new(text, language, "t1", 1, SnippetOrigin::Initial)
    }

    #[test]
    fn builtin_results_keep_the_invariant() {
        let ok = check_builtin("context A inv: self.x = 1", TargetLanguage::Ocl);
        assert!(ok.passed && ok.diagnostics.is_empty());

        let bad = check_builtin("context A inv self.x", TargetLanguage::Ocl);
        assert!(!bad.passed);
        assert!(!bad.diagnostics.is_empty());
        assert!(bad.diagnostics.iter().all(|d| !d.message.is_empty()));
    }

    #[test]
    fn builtin_is_deterministic() {
        let text = "fact F { all a: A | #a.xs = 2 }";
        let a = check_builtin(text, TargetLanguage::Alloy);
        let b = check_builtin(text, TargetLanguage::Alloy);
        assert_eq!(a, b);
    }

    #[test]
    fn registry_defaults_to_builtin() {
        let registry = ValidatorRegistry::default();
        assert_eq!(
            registry.list_validators(TargetLanguage::Ocl),
            vec![ValidatorKind::BuiltinSubset]
        );
        assert_eq!(registry.selection_for(TargetLanguage::Ocl), ValidatorSelection::Builtin);
    }

    #[test]
    fn registry_exposes_configured_external() {
        let mut raw = BTreeMap::new();
        raw.insert(
            "ocl".to_string(),
            LanguageValidatorConfig {
                kind: ValidatorKind::ExternalCommand,
                external: Some(ExternalValidatorConfig {
                    command_template: "true {file}".into(),
                    pass_exit_codes: vec![0],
                    timeout_s: 5,
                }),
            },
        );
        let registry = ValidatorRegistry::from_config(&raw).unwrap();
        assert_eq!(
            registry.list_validators(TargetLanguage::Ocl),
            vec![ValidatorKind::BuiltinSubset, ValidatorKind::ExternalCommand]
        );
        assert!(matches!(
            registry.selection_for(TargetLanguage::Ocl),
            ValidatorSelection::External(_)
        ));
    }

    #[test]
    fn registry_rejects_unknown_language() {
        let mut raw = BTreeMap::new();
        raw.insert("cobol".to_string(), LanguageValidatorConfig::default());
        assert!(matches!(
            ValidatorRegistry::from_config(&raw),
            Err(ValidationError::UnknownLanguage(_))
        ));
    }

    #[test]
    fn external_command_pass_and_fail() {
        let passing = ExternalValidatorConfig {
            command_template: "test -f {file}".into(),
            pass_exit_codes: vec![0],
            timeout_s: 10,
        };
        let result = check_wf(
            &snippet("context A inv: self.x = 1", TargetLanguage::Ocl),
            &ValidatorSelection::External(passing),
        )
        .unwrap();
        assert!(result.passed);
        assert_eq!(result.validator, ValidatorKind::ExternalCommand);

        let failing = ExternalValidatorConfig {
            command_template: "sh -c 'echo \"line 1: bad token\" >&2; exit 1' -- {file}".into(),
            pass_exit_codes: vec![0],
            timeout_s: 10,
        };
        let result = check_wf(
            &snippet("anything", TargetLanguage::Ocl),
            &ValidatorSelection::External(failing),
        )
        .unwrap();
        assert!(!result.passed);
        assert!(result.diagnostics[0].message.contains("bad token"));
    }

    #[test]
    fn external_command_missing_is_unavailable() {
        let config = ExternalValidatorConfig {
            command_template: "definitely-not-a-real-binary-xyz {file}".into(),
            pass_exit_codes: vec![0],
            timeout_s: 10,
        };
        let err = check_wf(
            &snippet("anything", TargetLanguage::Ocl),
            &ValidatorSelection::External(config),
        )
        .unwrap_err();
        assert!(matches!(err, ValidationError::ValidatorUnavailable(_)));
    }

    #[test]
    fn external_command_timeout() {
        let config = ExternalValidatorConfig {
            command_template: "sleep 5 # {file}".into(),
            pass_exit_codes: vec![0],
            timeout_s: 1,
        };
        let err = check_wf(
            &snippet("anything", TargetLanguage::Ocl),
            &ValidatorSelection::External(config),
        )
        .unwrap_err();
        assert!(matches!(err, ValidationError::Timeout(1)));
    }

    #[test]
    fn command_template_needs_one_file_slot() {
        let config = ExternalValidatorConfig {
            command_template: "validator".into(),
            pass_exit_codes: vec![0],
            timeout_s: 5,
        };
        assert!(config.validate().is_err());
    }
}
