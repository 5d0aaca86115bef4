//! Structured-output handling: prompt sanitizing, JSON extraction and repair,
//! and regeneration through a YAML round trip when repair is not enough.

mod repair;
mod sanitize;

pub use repair::{extract_json, find_json_span, fix_escapes};
pub use sanitize::{sanitize_prompt, sanitize_with, SubstitutionTable};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::llm::{ChatExchange, GenerationParams, LlmBackend, LlmError};

pub const DEFAULT_RETRY_LIMIT: u32 = 3;
pub const TO_YAML_INSTRUCTION: &str = "Extract structure into YAML";
pub const TO_JSON_INSTRUCTION: &str = "Restore to correct JSON";

#[derive(Debug, Error)]
pub enum StructuredError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("regeneration failed after {attempts} round(s): {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: LlmError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStage {
    Direct,
    EscapeFixed,
    Regenerated,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    /// Parsed object; empty when `stage` is `Failed`.
    pub value: Value,
    /// Regeneration rounds performed.
    pub attempts: u32,
    pub stage: RepairStage,
}

impl RepairOutcome {
    pub fn is_ok(&self) -> bool {
        self.stage != RepairStage::Failed
    }

    pub fn object(&self) -> Option<&Map<String, Value>> {
        self.value.as_object().filter(|_| self.is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegenConfig {
    pub retry_limit: u32,
    pub to_yaml_instruction: String,
    pub to_json_instruction: String,
}

impl Default for RegenConfig {
    fn default() -> Self {
        Self {
            retry_limit: DEFAULT_RETRY_LIMIT,
            to_yaml_instruction: TO_YAML_INSTRUCTION.to_string(),
            to_json_instruction: TO_JSON_INSTRUCTION.to_string(),
        }
    }
}

fn parse_object(candidate: &str) -> Option<Value> {
    serde_json::from_str::<Value>(candidate)
        .ok()
        .filter(Value::is_object)
}

/// Plain bracket-match-and-parse with no repair at all.
pub fn parse_direct(text: &str) -> Option<Value> {
    extract_json(text).and_then(parse_object)
}

/// Parses without any model call: directly, or after the escape catalog.
pub fn parse_with_fixes(text: &str) -> Option<(Value, RepairStage)> {
    parse_with_fixes_where(text, &|_| true)
}

/// As [`parse_with_fixes`], skipping parses that `accept` rejects.
pub fn parse_with_fixes_where(
    text: &str,
    accept: &dyn Fn(&Value) -> bool,
) -> Option<(Value, RepairStage)> {
    if let Some(v) = parse_direct(text).filter(|v| accept(v)) {
        return Some((v, RepairStage::Direct));
    }
    let fixed = fix_escapes(text);
    if let Some(v) = extract_json(&fixed)
        .and_then(parse_object)
        .filter(|v| accept(v))
    {
        return Some((v, RepairStage::EscapeFixed));
    }
    let refixed = extract_json(text).map(fix_escapes);
    refixed
        .as_deref()
        .and_then(extract_json)
        .and_then(parse_object)
        .filter(|v| accept(v))
        .map(|v| (v, RepairStage::EscapeFixed))
}

pub fn json_regen(
    backend: &dyn LlmBackend,
    raw_output: &str,
    retry_limit: u32,
) -> Result<RepairOutcome, StructuredError> {
    let config = RegenConfig {
        retry_limit,
        ..RegenConfig::default()
    };
    json_regen_with(backend, raw_output, &config)
}

/// Repairs `raw_output` into a JSON object. Each round tries the escape
/// catalog and bracket matching; on failure the model is asked to restate the
/// text as YAML and then back as JSON. After `retry_limit` rounds the empty
/// object is returned with stage `Failed`.
pub fn json_regen_with(
    backend: &dyn LlmBackend,
    raw_output: &str,
    config: &RegenConfig,
) -> Result<RepairOutcome, StructuredError> {
    json_regen_where(backend, raw_output, config, &|_| true)
}

/// As [`json_regen_with`]; objects that `accept` rejects count as failed rounds.
pub fn json_regen_where(
    backend: &dyn LlmBackend,
    raw_output: &str,
    config: &RegenConfig,
    accept: &dyn Fn(&Value) -> bool,
) -> Result<RepairOutcome, StructuredError> {
    let params = GenerationParams::greedy();
    let mut current = raw_output.to_string();
    let mut attempts = 0;
    loop {
        if let Some((value, stage)) = parse_with_fixes_where(&current, accept) {
            let stage = if attempts == 0 {
                stage
            } else {
                RepairStage::Regenerated
            };
            return Ok(RepairOutcome {
                value,
                attempts,
                stage,
            });
        }
        if attempts >= config.retry_limit {
            return Ok(RepairOutcome {
                value: Value::Object(Map::new()),
                attempts,
                stage: RepairStage::Failed,
            });
        }
        attempts += 1;
        let body = if current.trim().is_empty() {
            "(empty)"
        } else {
            current.as_str()
        };
        let yaml = backend
            .complete(
                &ChatExchange::single(&config.to_yaml_instruction, body),
                &params,
            )
            .map_err(|source| StructuredError::Backend { attempts, source })?;
        let yaml_body = if yaml.trim().is_empty() {
            "(empty)"
        } else {
            yaml.as_str()
        };
        current = backend
            .complete(
                &ChatExchange::single(&config.to_json_instruction, yaml_body),
                &params,
            )
            .map_err(|source| StructuredError::Backend { attempts, source })?;
    }
}
