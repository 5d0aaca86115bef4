//! Trajectory records shared by the controller, the error rules and the metrics.

use serde::{Deserialize, Serialize};

use crate::tools::{AnalysisResult, ToolCall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    pub action: Option<ToolCall>,
    pub observation: String,
    /// The call was intercepted by an error rule or the tool failed at runtime.
    pub error_flag: bool,
    /// The action could not be parsed, named an unknown tool or lacked a required argument.
    pub invalid_flag: bool,
}

impl Step {
    pub fn succeeded(&self) -> bool {
        !self.error_flag && !self.invalid_flag
    }

    pub fn function(&self) -> Option<&str> {
        self.action.as_ref().map(|a| a.function.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// The initial task statement the controller works on.
    pub task: String,
    pub steps: Vec<Step>,
    pub result: Option<AnalysisResult>,
    pub passed: bool,
    /// Number of leading steps inherited from a parent trajectory (branch runs).
    pub seed_prefix_len: usize,
    /// Why the run stopped early, if it did.
    pub diagnostic: Option<String>,
}

impl Trajectory {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            steps: Vec::new(),
            result: None,
            passed: false,
            seed_prefix_len: 0,
            diagnostic: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn invalid_count(&self) -> usize {
        self.steps.iter().filter(|s| s.invalid_flag).count()
    }

    pub fn errored_count(&self) -> usize {
        self.steps.iter().filter(|s| s.error_flag).count()
    }
}
