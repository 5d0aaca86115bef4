use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ToolCall, ToolKind, ToolRegistry};
use crate::obsk::{looks_like_key, SnapshotStore};
use crate::trajectory::Step;

pub const DEFAULT_TRIVIAL_INPUT_FLOOR: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorRule {
    DuplicateCall,
    TrivialInput,
    EarlyFinalize,
}

impl ErrorRule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DuplicateCall => "duplicate_call",
            Self::TrivialInput => "trivial_input",
            Self::EarlyFinalize => "early_finalize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub rule: ErrorRule,
    pub message: String,
    pub suggestion: String,
}

impl ErrorMessage {
    pub fn render(&self) -> String {
        format!(
            "Error ({}): {}\nSuggestion: {}",
            self.rule.as_str(),
            self.message,
            self.suggestion
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    /// Expert input shorter than this (characters, after snapshot resolution) is trivial.
    pub trivial_input_floor: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            trivial_input_floor: DEFAULT_TRIVIAL_INPUT_FLOOR,
        }
    }
}

/// Checks a parsed call against the three error rules before it runs:
/// repeating a stateless call, feeding an expert trivial input, and
/// finalizing before at least one information tool and one expert tool have
/// produced a clean observation.
pub fn check_errors(
    history: &[Step],
    call: &ToolCall,
    registry: &ToolRegistry,
    store: &SnapshotStore,
    config: &GuardConfig,
) -> Option<ErrorMessage> {
    let spec = registry.spec(&call.function)?;
    match spec.kind {
        ToolKind::Finalize => {
            let kind_done = |kind: ToolKind| {
                history.iter().any(|s| {
                    s.succeeded()
                        && s.function()
                            .and_then(|f| registry.spec(f))
                            .is_some_and(|sp| sp.kind == kind)
                })
            };
            let info = kind_done(ToolKind::Info);
            let expert = kind_done(ToolKind::Expert);
            if info && expert {
                return None;
            }
            let missing = match (info, expert) {
                (false, false) => "no information-gathering tool and no expert analysis",
                (false, true) => "no information-gathering tool",
                _ => "no expert analysis",
            };
            Some(ErrorMessage {
                rule: ErrorRule::EarlyFinalize,
                message: format!("finalize was called too early: the investigation has {missing} yet."),
                suggestion: "Gather data with an information tool, analyse it with an expert tool (pass the \
                             snapshot key), then finalize."
                    .into(),
            })
        }
        _ if spec.stateless => {
            let wire = call.kwargs_wire();
            let repeated = history.iter().any(|s| {
                s.action
                    .as_ref()
                    .is_some_and(|a| a.function == call.function && a.kwargs_wire() == wire)
            });
            if repeated {
                return Some(ErrorMessage {
                    rule: ErrorRule::DuplicateCall,
                    message: format!(
                        "{} was already called with the same arguments {wire}.",
                        call.function
                    ),
                    suggestion: "Reuse the earlier observation or its snapshot key, or try a different tool."
                        .into(),
                });
            }
            trivial_input(call, registry, store, config)
        }
        _ => trivial_input(call, registry, store, config),
    }
}

fn trivial_input(
    call: &ToolCall,
    registry: &ToolRegistry,
    store: &SnapshotStore,
    config: &GuardConfig,
) -> Option<ErrorMessage> {
    let spec = registry.spec(&call.function)?;
    if spec.kind != ToolKind::Expert {
        return None;
    }
    for param in spec.params.iter().filter(|p| p.ty.carries_content()) {
        let Some(value) = call.kwargs.get(&param.name) else {
            continue;
        };
        let raw = match value {
            Value::String(s) => s.trim().to_string(),
            Value::Null => String::new(),
            other => other.to_string(),
        };
        let resolved = if looks_like_key(&raw) {
            match store.get_str(&raw) {
                Ok(text) => text.to_string(),
                Err(_) => {
                    return Some(ErrorMessage {
                        rule: ErrorRule::TrivialInput,
                        message: format!(
                            "{} received snapshot key {raw} for \"{}\", but no observation has that key.",
                            call.function, param.name
                        ),
                        suggestion: "Copy the key from a \"[ snapshot: ... ]\" line of an earlier observation."
                            .into(),
                    })
                }
            }
        } else {
            raw
        };
        let len = resolved.trim().chars().count();
        if len < config.trivial_input_floor {
            return Some(ErrorMessage {
                rule: ErrorRule::TrivialInput,
                message: format!(
                    "{} received trivial input for \"{}\" ({len} characters).",
                    call.function, param.name
                ),
                suggestion: "Pass the snapshot key of a substantial observation instead of short or empty text."
                    .into(),
            });
        }
    }
    None
}
