//! Tool registry, documentation, dispatch and the error rules.

mod dedup;
mod finalize;
mod guard;
mod wire;

pub use dedup::{deduplicate_entries, DEFAULT_DEDUP_THRESHOLD};
pub use finalize::{
    parse_finalize, AnalysisResult, FinalizeParse, Responsibility, BASELINE, FINALIZE,
};
pub use guard::{check_errors, ErrorMessage, ErrorRule, GuardConfig, DEFAULT_TRIVIAL_INPUT_FLOOR};
pub use wire::{to_spaced_json, ToolCall};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::obsk::{SnapshotKey, SnapshotStore, EMPTY_OBSERVATION};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("tool {0} is already registered")]
    DuplicateName(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Data lookups.
    Info,
    /// LLM-backed analysis.
    Expert,
    Finalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    /// Short identifier-like string.
    String,
    /// Free text that an expert analyses.
    Text,
    /// Snapshot key standing for a stored observation.
    Snapshot,
    Integer,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::String => "string",
            Self::Text => "text",
            Self::Snapshot => "snapshot key",
            Self::Integer => "integer",
        }
    }

    /// Whether the trivial-input rule inspects this parameter.
    pub fn carries_content(self) -> bool {
        matches!(self, Self::Text | Self::Snapshot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub ty: ParamType,
    pub required: bool,
    pub description: String,
}

impl ParamSpec {
    pub fn required(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, ty, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub kind: ToolKind,
    /// Same arguments always give the same answer, so repeating a call is pointless.
    pub stateless: bool,
}

impl ToolSpec {
    /// The exit tool; its arguments carry the analysis result.
    pub fn finalize() -> Self {
        Self {
            name: FINALIZE.into(),
            description:
                "Report the final analysis and end the investigation. Call it only after gathering \
                          information and analysing it with an expert tool."
                    .into(),
            params: vec![
                ParamSpec::required(
                    "root_cause",
                    ParamType::Text,
                    "The fundamental cause of the anomaly.",
                ),
                ParamSpec::required(
                    "solution",
                    ParamType::Text,
                    "How to mitigate or fix the problem.",
                ),
                ParamSpec::required(
                    "evidence",
                    ParamType::Text,
                    "Direct supporting information, quoted from logs or records.",
                ),
                ParamSpec::required(
                    "responsibility",
                    ParamType::String,
                    "Either \"User\" or \"Platform\", following the responsibility rules.",
                ),
            ],
            kind: ToolKind::Finalize,
            stateless: false,
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub enum ToolOutput {
    /// Data entries (log lines, table rows); deduplicated before display.
    Entries(Vec<String>),
    Text(String),
}

pub trait ToolHandler: Send + Sync {
    fn call(&self, kwargs: &Map<String, Value>) -> Result<ToolOutput, ToolError>;
}

impl<F> ToolHandler for F
where
    F: Fn(&Map<String, Value>) -> Result<ToolOutput, ToolError> + Send + Sync,
{
    fn call(&self, kwargs: &Map<String, Value>) -> Result<ToolOutput, ToolError> {
        self(kwargs)
    }
}

struct FinalizeHandler;

impl ToolHandler for FinalizeHandler {
    fn call(&self, _kwargs: &Map<String, Value>) -> Result<ToolOutput, ToolError> {
        Ok(ToolOutput::Text("Analysis finalized.".into()))
    }
}

#[derive(Clone)]
struct Entry {
    spec: ToolSpec,
    handler: Arc<dyn ToolHandler>,
}

/// Registration-ordered tool set.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.entries.iter().map(|e| &e.spec.name))
            .finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        spec: ToolSpec,
        handler: Arc<dyn ToolHandler>,
    ) -> Result<(), ToolError> {
        if self.by_name.contains_key(&spec.name) {
            return Err(ToolError::DuplicateName(spec.name));
        }
        if spec.kind == ToolKind::Finalize
            && self
                .entries
                .iter()
                .any(|e| e.spec.kind == ToolKind::Finalize)
        {
            return Err(ToolError::Config(
                "a finalize tool is already registered".into(),
            ));
        }
        self.by_name.insert(spec.name.clone(), self.entries.len());
        self.entries.push(Entry { spec, handler });
        Ok(())
    }

    pub fn register_finalize(&mut self) -> Result<(), ToolError> {
        self.register(ToolSpec::finalize(), Arc::new(FinalizeHandler))
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.by_name.get(name).map(|&i| &self.entries[i].spec)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.entries.iter().map(|e| &e.spec)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.spec.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn handler(&self, name: &str) -> Option<&Arc<dyn ToolHandler>> {
        self.by_name.get(name).map(|&i| &self.entries[i].handler)
    }
}

pub const SNAPSHOT_RULES: &str = "\
Snapshot rules:
- Long observations are cut to their first lines, followed by a line such as \"...53 lines omitted.\" and a key line \"[ snapshot: 2975241420 ]\".
- The full observation stays stored under that 10-digit key. To work on the full text, pass the key string itself as the argument value, for example {\"snapshot\": \"2975241420\"}.
- Never copy long log text into arguments; always pass the snapshot key instead.";

/// Tool documentation for the system prompt, in registration order.
pub fn render_documentation(registry: &ToolRegistry) -> Result<String, ToolError> {
    if registry.is_empty() {
        return Err(ToolError::Config("tool registry is empty".into()));
    }
    if !registry.specs().any(|s| s.kind == ToolKind::Finalize) {
        return Err(ToolError::Config(
            "tool registry has no finalize tool".into(),
        ));
    }
    let mut doc = String::from(
        "Tools:\nEach action must be exactly one JSON object of the form \
         {\"function\": \"<tool name>\", \"kwargs\": {<arguments>}}.\n",
    );
    for (i, spec) in registry.specs().enumerate() {
        let _ = writeln!(doc, "{}. {}: {}", i + 1, spec.name, spec.description);
        if spec.params.is_empty() {
            let _ = writeln!(doc, "   (no arguments)");
        }
        for p in &spec.params {
            let _ = writeln!(
                doc,
                "   - {} ({}, {}): {}",
                p.name,
                p.ty.as_str(),
                if p.required { "required" } else { "optional" },
                p.description
            );
        }
    }
    doc.push('\n');
    doc.push_str(SNAPSHOT_RULES);
    Ok(doc)
}

/// Per-trajectory state a dispatch needs.
pub struct DispatchContext<'a> {
    pub store: &'a mut SnapshotStore,
    pub dedup_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DispatchStatus {
    Ok(SnapshotKey),
    UnknownTool,
    MissingParam(String),
    SnapshotError(String),
    HandlerError(String),
}

impl DispatchStatus {
    /// Structural failures count against action validity.
    pub fn is_invalid(&self) -> bool {
        matches!(self, Self::UnknownTool | Self::MissingParam(_))
    }

    pub fn is_error(&self) -> bool {
        !matches!(self, Self::Ok(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchOutcome {
    pub observation: String,
    pub status: DispatchStatus,
}

impl DispatchOutcome {
    fn error(status: DispatchStatus, observation: String) -> Self {
        Self {
            observation,
            status,
        }
    }
}

/// Runs a call. Never fails: every problem becomes an error observation.
pub fn dispatch(
    registry: &ToolRegistry,
    call: &ToolCall,
    ctx: &mut DispatchContext<'_>,
) -> DispatchOutcome {
    let Some(spec) = registry.spec(&call.function) else {
        return DispatchOutcome::error(
            DispatchStatus::UnknownTool,
            format!(
                "Error: unknown tool \"{}\". Valid tools are: {}.",
                call.function,
                registry.names().join(", ")
            ),
        );
    };
    if let Some(missing) = spec
        .params
        .iter()
        .find(|p| p.required && call.kwargs.get(&p.name).is_none_or(Value::is_null))
    {
        return DispatchOutcome::error(
            DispatchStatus::MissingParam(missing.name.clone()),
            format!(
                "Error: tool \"{}\" requires the argument \"{}\" ({}).",
                spec.name,
                missing.name,
                missing.ty.as_str()
            ),
        );
    }
    let resolved = match ctx.store.resolve_snapshot_args(&call.kwargs) {
        Ok(r) => r,
        Err(e) => {
            return DispatchOutcome::error(
                DispatchStatus::SnapshotError(e.to_string()),
                format!(
                "Error: {e}. Use a snapshot key exactly as it appeared in an earlier observation."
            ),
            )
        }
    };
    let handler = registry
        .handler(&spec.name)
        .expect("spec and handler registered together");
    let output = match handler.call(&resolved) {
        Ok(o) => o,
        Err(e) => {
            return DispatchOutcome::error(
                DispatchStatus::HandlerError(e.to_string()),
                format!("Error: tool \"{}\" failed: {e}", spec.name),
            )
        }
    };
    let full = match output {
        ToolOutput::Entries(entries) if spec.kind == ToolKind::Info => {
            deduplicate_entries(&entries, ctx.dedup_threshold).join("\n")
        }
        ToolOutput::Entries(entries) => entries.join("\n"),
        ToolOutput::Text(text) => text,
    };
    let full = if full.trim().is_empty() {
        EMPTY_OBSERVATION.to_string()
    } else {
        full
    };
    match ctx.store.put_and_render(&full, &spec.name) {
        Ok((key, rendered)) => DispatchOutcome {
            observation: rendered,
            status: DispatchStatus::Ok(key),
        },
        Err(e) => DispatchOutcome::error(
            DispatchStatus::HandlerError(e.to_string()),
            format!("Error: {e}"),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Mutex;

    fn info_spec(name: &str) -> ToolSpec {
        ToolSpec {
            name: name.into(),
            description: format!("{name} lookup"),
            params: vec![ParamSpec::required(
                "job_id",
                ParamType::String,
                "Job identifier.",
            )],
            kind: ToolKind::Info,
            stateless: true,
        }
    }

    fn lines_handler(n: usize) -> Arc<dyn ToolHandler> {
        Arc::new(move |_: &Map<String, Value>| {
            Ok(ToolOutput::Entries((0..n).map(|i| i.to_string()).collect()))
        })
    }

    fn registry() -> ToolRegistry {
        let mut r = ToolRegistry::new();
        r.register(info_spec("runtime_log"), lines_handler(60))
            .unwrap();
        r.register_finalize().unwrap();
        r
    }

    fn call(v: Value) -> ToolCall {
        ToolCall::from_value(&v).unwrap()
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut r = registry();
        let err = r
            .register(info_spec("runtime_log"), lines_handler(1))
            .unwrap_err();
        assert_eq!(err, ToolError::DuplicateName("runtime_log".into()));
        assert!(r.register_finalize().is_err());
    }

    #[test]
    fn documentation_is_deterministic_and_needs_finalize() {
        let r = registry();
        assert_eq!(
            render_documentation(&r).unwrap(),
            render_documentation(&r).unwrap()
        );
        let mut no_final = ToolRegistry::new();
        no_final.register(info_spec("a"), lines_handler(1)).unwrap();
        assert!(matches!(
            render_documentation(&no_final),
            Err(ToolError::Config(_))
        ));
        assert!(render_documentation(&ToolRegistry::new()).is_err());
    }

    #[test]
    fn unknown_tool_lists_valid_names() {
        let r = registry();
        let mut store = SnapshotStore::default();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "runtime_logs", "kwargs": {}})),
            &mut ctx,
        );
        assert_eq!(out.status, DispatchStatus::UnknownTool);
        assert!(out.observation.contains("runtime_log, finalize"));
    }

    #[test]
    fn missing_param_named() {
        let r = registry();
        let mut store = SnapshotStore::default();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "runtime_log", "kwargs": {}})),
            &mut ctx,
        );
        assert_eq!(out.status, DispatchStatus::MissingParam("job_id".into()));
        assert!(out.observation.contains("\"job_id\""));
    }

    #[test]
    fn info_output_is_stored_and_truncated() {
        let r = registry();
        let mut store = SnapshotStore::default();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "runtime_log", "kwargs": {"job_id": "j"}})),
            &mut ctx,
        );
        let DispatchStatus::Ok(key) = out.status else {
            panic!("dispatch failed: {}", out.observation)
        };
        assert!(out.observation.contains("...53 lines omitted."));
        assert!(out.observation.ends_with(&format!("[ snapshot: {key} ]")));
        assert_eq!(store.get(&key).unwrap().lines().count(), 60);
    }

    #[test]
    fn expert_receives_resolved_snapshot() {
        let seen = Arc::new(Mutex::new(String::new()));
        let captured = seen.clone();
        let mut r = registry();
        r.register(
            ToolSpec {
                name: "log_agent".into(),
                description: "analyse".into(),
                params: vec![ParamSpec::required("snapshot", ParamType::Snapshot, "key")],
                kind: ToolKind::Expert,
                stateless: true,
            },
            Arc::new(move |kw: &Map<String, Value>| {
                *captured.lock().unwrap() = kw["snapshot"].as_str().unwrap().to_string();
                Ok(ToolOutput::Text("analysis".into()))
            }),
        )
        .unwrap();
        let mut store = SnapshotStore::default();
        let key = store
            .put("the full text behind the key", "runtime_log")
            .unwrap();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "log_agent", "kwargs": {"snapshot": key.as_str()}})),
            &mut ctx,
        );
        assert!(matches!(out.status, DispatchStatus::Ok(_)));
        assert_eq!(*seen.lock().unwrap(), "the full text behind the key");
    }

    #[test]
    fn handler_failure_becomes_observation() {
        let mut r = ToolRegistry::new();
        r.register(
            info_spec("broken"),
            Arc::new(|_: &Map<String, Value>| Err(ToolError::Failed("job not found".into()))),
        )
        .unwrap();
        r.register_finalize().unwrap();
        let mut store = SnapshotStore::default();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "broken", "kwargs": {"job_id": "x"}})),
            &mut ctx,
        );
        assert!(matches!(out.status, DispatchStatus::HandlerError(_)));
        assert!(!out.status.is_invalid());
        assert!(out.observation.contains("job not found"));
    }

    #[test]
    fn empty_output_uses_sentinel() {
        let mut r = ToolRegistry::new();
        r.register(info_spec("quiet"), lines_handler(0)).unwrap();
        let mut store = SnapshotStore::default();
        let mut ctx = DispatchContext {
            store: &mut store,
            dedup_threshold: 0.9,
        };
        let out = dispatch(
            &r,
            &call(json!({"function": "quiet", "kwargs": {"job_id": "x"}})),
            &mut ctx,
        );
        assert!(out.observation.starts_with(EMPTY_OBSERVATION));
    }
}
