use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ToolCall;

/// Placeholder used for missing fields and as the scoring baseline.
pub const BASELINE: &str = "Unclear";
pub const FINALIZE: &str = "finalize";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Responsibility {
    User,
    Platform,
    Unclear,
}

impl Responsibility {
    /// Case-insensitive; accepts phrasings like "User responsibility".
    pub fn parse(text: &str) -> Option<Self> {
        let first = text
            .trim()
            .split(|c: char| !c.is_alphanumeric())
            .find(|w| !w.is_empty())?
            .to_ascii_lowercase();
        match first.as_str() {
            "user" => Some(Self::User),
            "platform" => Some(Self::Platform),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::User => "User",
            Self::Platform => "Platform",
            Self::Unclear => BASELINE,
        }
    }
}

impl fmt::Display for Responsibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub root_cause: String,
    pub solution: String,
    pub evidence: String,
    pub responsibility: Responsibility,
}

impl AnalysisResult {
    pub fn baseline() -> Self {
        Self {
            root_cause: BASELINE.into(),
            solution: BASELINE.into(),
            evidence: BASELINE.into(),
            responsibility: Responsibility::Unclear,
        }
    }

    /// The three free-text fields in scoring order.
    pub fn text_fields(&self) -> [(&'static str, &str); 3] {
        [
            ("root_cause", self.root_cause.as_str()),
            ("solution", self.solution.as_str()),
            ("evidence", self.evidence.as_str()),
        ]
    }

    /// Replaces blank fields with the baseline string.
    pub fn filled(mut self) -> Self {
        for field in [&mut self.root_cause, &mut self.solution, &mut self.evidence] {
            if field.trim().is_empty() {
                *field = BASELINE.into();
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalizeParse {
    pub result: AnalysisResult,
    /// Fields that were absent or blank and got the baseline string.
    pub missing: Vec<&'static str>,
    /// False when a responsibility value was given but matched neither class.
    pub responsibility_recognized: bool,
}

impl FinalizeParse {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.responsibility_recognized
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        Value::Array(items) => items
            .iter()
            .map(value_text)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("; "),
        other => other.to_string(),
    }
}

/// Pulls the four result fields out of a finalize call. Never fails: gaps are
/// filled with [`BASELINE`] and recorded.
pub fn parse_finalize(call: &ToolCall) -> FinalizeParse {
    let mut missing = Vec::new();
    let mut text = |name: &'static str| {
        let v = call.kwargs.get(name).map(value_text).unwrap_or_default();
        if v.is_empty() {
            missing.push(name);
            BASELINE.to_string()
        } else {
            v
        }
    };
    let root_cause = text("root_cause");
    let solution = text("solution");
    let evidence = text("evidence");
    let raw_resp = call
        .kwargs
        .get("responsibility")
        .map(value_text)
        .unwrap_or_default();
    let (responsibility, recognized) = if raw_resp.is_empty() {
        missing.push("responsibility");
        (Responsibility::Unclear, true)
    } else {
        match Responsibility::parse(&raw_resp) {
            Some(r) => (r, true),
            None => (Responsibility::Unclear, false),
        }
    };
    FinalizeParse {
        result: AnalysisResult {
            root_cause,
            solution,
            evidence,
            responsibility,
        },
        missing,
        responsibility_recognized: recognized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn call(kwargs: Value) -> ToolCall {
        ToolCall::from_value(&json!({"function": "finalize", "kwargs": kwargs})).unwrap()
    }

    #[test]
    fn full_result() {
        let p = parse_finalize(&call(json!({
            "root_cause": "ES client timeout",
            "solution": "contact ES support",
            "evidence": "SocketTimeoutException",
            "responsibility": "platform"
        })));
        assert!(p.is_complete());
        assert_eq!(p.result.responsibility, Responsibility::Platform);
    }

    #[test]
    fn gaps_filled_with_baseline() {
        let p = parse_finalize(&call(json!({"root_cause": "  ", "evidence": ["a", "b"]})));
        assert_eq!(p.result.root_cause, BASELINE);
        assert_eq!(p.result.solution, BASELINE);
        assert_eq!(p.result.evidence, "a; b");
        assert_eq!(p.missing, vec!["root_cause", "solution", "responsibility"]);
    }

    #[test]
    fn unknown_responsibility_flagged() {
        let p = parse_finalize(&call(json!({"responsibility": "the vendor"})));
        assert_eq!(p.result.responsibility, Responsibility::Unclear);
        assert!(!p.responsibility_recognized);
        assert_eq!(
            Responsibility::parse("User responsibility"),
            Some(Responsibility::User)
        );
    }
}
