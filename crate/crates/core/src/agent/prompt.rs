use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::llm::ChatExchange;
use crate::obsk::parse_snapshot_line;
use crate::structured::sanitize_prompt;
use crate::trajectory::Trajectory;

pub const FRAMEWORK_RULES: &str = "\
You are an autonomous site reliability agent that investigates anomalies of jobs running on a managed \
stream-computing platform. You work in a loop of Thought, Function and Observation:
Thought: reason about what is known so far and decide the next action.
Function: exactly one tool call written as a single JSON object {\"function\": \"<tool name>\", \"kwargs\": {<arguments>}}.
Observation: the result of the call, which is shown to you in the next turn.
Each turn write one Thought and one Function, then stop. Never write an Observation yourself. \
Keep calling tools until you can explain the anomaly, then report it with the finalize tool.";

pub const TASK_REQUIREMENTS: &str = "\
Task requirements:
Find the root cause of the anomaly, a practical solution, the evidence that supports the conclusion, \
and who is responsible for the problem. Quote evidence directly from logs or records. \
Only data recorded before the anomaly was detected is available.

Responsibility rules:
Platform: the problem can only be fixed by the platform maintainers. Examples:
1. Infrastructure layer: hardware faults, broken network connectivity, operating system upgrades.
2. Platform services layer: a job evicted in favour of higher priority work, resources reclaimed after \
oversubscription, failures of management services (API server, SQL service and similar), defects or \
incompatibilities in the managed runtime or other platform components.
3. Unspecified problems: anything that needs further platform-side investigation before it can be mitigated.
User: the user misused the platform, on purpose or by mistake, or can fix the problem through self-service. Examples:
1. Deliberate operations: the user cancelled the job through the SDK, an RPC request or the console.
2. Configuration errors: insufficient resources (memory leaks, wrong settings, exhausted quota) or missing \
high-availability settings such as restart strategies or checkpointing.
3. Code issues: syntax errors and problems that a code change resolves, including exceptions raised by the job \
itself or by its upstream and downstream services.
4. Best practice violations: any problem for which a concrete mitigation can be handed to the user, even if it \
touches infrastructure or platform behaviour.";

/// The three fixed sections of the controller's system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasePrompts {
    pub framework_rules: String,
    pub task_requirements: String,
    pub tool_docs: String,
}

impl BasePrompts {
    pub fn with_tool_docs(tool_docs: impl Into<String>) -> Self {
        Self {
            framework_rules: FRAMEWORK_RULES.to_string(),
            task_requirements: TASK_REQUIREMENTS.to_string(),
            tool_docs: tool_docs.into(),
        }
    }

    pub fn system_prompt(&self) -> String {
        format!(
            "{}\n\n{}\n\n{}",
            self.framework_rules, self.task_requirements, self.tool_docs
        )
    }
}

/// Renders the task and step history in Thought / Function / Observation
/// layout. Action JSON and snapshot lines stay verbatim; everything else is
/// sanitized.
pub fn render_history(trajectory: &Trajectory) -> String {
    let mut raw = String::new();
    let mut protected: Vec<Range<usize>> = Vec::new();
    raw.push_str("Task: ");
    raw.push_str(&trajectory.task);
    for step in &trajectory.steps {
        raw.push_str("\n\nThought: ");
        raw.push_str(&step.thought);
        raw.push_str("\nFunction: ");
        match &step.action {
            Some(call) => {
                let start = raw.len();
                raw.push_str(&call.to_wire());
                protected.push(start..raw.len());
            }
            None => raw.push_str("(no valid action)"),
        }
        raw.push_str("\nObservation:\n");
        let obs_start = raw.len();
        raw.push_str(&step.observation);
        // snapshot lines are framework markup and stay bit-exact
        let mut offset = obs_start;
        for line in step.observation.split_inclusive('\n') {
            let body = line.trim_end_matches('\n');
            if parse_snapshot_line(body).is_some() && body.trim() == body {
                protected.push(offset..offset + body.len());
            }
            offset += line.len();
        }
    }
    sanitize_prompt(&raw, &protected).expect("spans are built in order and in bounds")
}

pub fn assemble_with_system(system_prompt: &str, trajectory: &Trajectory) -> ChatExchange {
    ChatExchange::single(system_prompt, render_history(trajectory))
}

/// Controller prompt for the next step. No few-shot examples are included.
pub fn assemble_prompt(prompts: &BasePrompts, trajectory: &Trajectory) -> ChatExchange {
    assemble_with_system(&prompts.system_prompt(), trajectory)
}
