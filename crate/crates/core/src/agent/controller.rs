use std::sync::Arc;

use thiserror::Error;

use super::{assemble_with_system, AgentConfig};
use crate::llm::{generate_adaptive, LlmBackend, LlmError};
use crate::obsk::SnapshotStore;
use crate::structured::{json_regen_where, parse_direct, StructuredError};
use crate::tools::{
    check_errors, dispatch, parse_finalize, DispatchContext, ToolCall, ToolKind, ToolRegistry,
};
use crate::trajectory::{Step, Trajectory};

pub const FORMAT_HINT: &str =
    "Error: no valid action was found. Write a Thought, then exactly one action as a \
JSON object such as {\"function\": \"<tool name>\", \"kwargs\": {\"<argument>\": \"<value>\"}}.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("trajectory already finished")]
    Finished,
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("action repair failed: {0}")]
    Repair(#[from] StructuredError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Splits a generation into its thought and the text from the first `{` on.
/// `None` for the action means the output contained no object at all.
pub fn split_generation(text: &str) -> (String, Option<&str>) {
    let Some(start) = text.find('{') else {
        return (clean_thought(text), None);
    };
    (clean_thought(&text[..start]), Some(&text[start..]))
}

fn clean_thought(text: &str) -> String {
    let mut t = text.trim();
    for prefix in ["Thought:", "thought:", "THOUGHT:"] {
        if let Some(rest) = t.strip_prefix(prefix) {
            t = rest.trim_start();
        }
    }
    for suffix in ["Function:", "Action:", "function:", "action:"] {
        if let Some(rest) = t.strip_suffix(suffix) {
            t = rest.trim_end();
        }
    }
    t.to_string()
}

/// One controller run over one task. Holds the trajectory and its snapshot store.
pub struct Controller {
    config: AgentConfig,
    system_prompt: String,
    registry: Arc<ToolRegistry>,
    store: SnapshotStore,
    trajectory: Trajectory,
    finished: bool,
}

impl Controller {
    pub fn new(
        config: AgentConfig,
        registry: Arc<ToolRegistry>,
        task: impl Into<String>,
    ) -> Result<Self, AgentError> {
        config.validate().map_err(AgentError::Config)?;
        let system_prompt = config.prompts.system_prompt();
        let store = SnapshotStore::new(config.head_lines);
        Ok(Self {
            config,
            system_prompt,
            registry,
            store,
            trajectory: Trajectory::new(task),
            finished: false,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn store(&self) -> &SnapshotStore {
        &self.store
    }

    pub fn is_finished(&self) -> bool {
        self.finished || self.trajectory.steps.len() >= self.config.max_steps
    }

    /// Starts a new run that shares the first `prefix_len` steps. The branch
    /// reads the current store through a frozen copy and writes to its own overlay.
    pub fn branch(&self, prefix_len: usize, config: AgentConfig) -> Result<Controller, AgentError> {
        config.validate().map_err(AgentError::Config)?;
        let prefix_len = prefix_len.min(self.trajectory.steps.len());
        let mut trajectory = Trajectory::new(self.trajectory.task.clone());
        trajectory.steps = self.trajectory.steps[..prefix_len].to_vec();
        trajectory.seed_prefix_len = prefix_len;
        let frozen = Arc::new(self.store.clone());
        Ok(Controller {
            system_prompt: config.prompts.system_prompt(),
            config,
            registry: self.registry.clone(),
            store: SnapshotStore::overlay(frozen),
            trajectory,
            finished: false,
        })
    }

    /// Runs one thought/action/observation cycle and appends the step.
    pub fn step(&mut self, backend: &dyn LlmBackend) -> Result<&Step, AgentError> {
        if self.finished {
            return Err(AgentError::Finished);
        }
        if self.trajectory.steps.len() >= self.config.max_steps {
            return Err(AgentError::BudgetExhausted(self.config.max_steps));
        }
        let exchange = assemble_with_system(&self.system_prompt, &self.trajectory);
        let generation = generate_adaptive(
            backend,
            &exchange,
            &self.config.params,
            &self.config.adaptive,
        )?;
        let (thought, action_text) = split_generation(&generation.text);

        let step = match action_text {
            None => invalid(thought, FORMAT_HINT.to_string()),
            Some(action_text) => {
                let parsed = if self.config.json_regen {
                    let is_call = |v: &serde_json::Value| ToolCall::from_value(v).is_ok();
                    let outcome =
                        json_regen_where(backend, action_text, &self.config.regen, &is_call)?;
                    outcome.is_ok().then_some(outcome.value)
                } else {
                    parse_direct(action_text)
                };
                match parsed.map(|v| ToolCall::from_value(&v)) {
                    None => invalid(thought, FORMAT_HINT.to_string()),
                    Some(Err(why)) => invalid(thought, format!("Error: {why}.\n{FORMAT_HINT}")),
                    Some(Ok(call)) => self.execute(thought, call),
                }
            }
        };
        self.trajectory.steps.push(step);
        Ok(self.trajectory.steps.last().expect("just pushed"))
    }

    fn execute(&mut self, thought: String, call: ToolCall) -> Step {
        if self.config.error_handling {
            if let Some(msg) = check_errors(
                &self.trajectory.steps,
                &call,
                &self.registry,
                &self.store,
                &self.config.guard,
            ) {
                return Step {
                    thought,
                    action: Some(call),
                    observation: msg.render(),
                    error_flag: true,
                    invalid_flag: false,
                };
            }
        }
        let is_finalize = self
            .registry
            .spec(&call.function)
            .is_some_and(|s| s.kind == ToolKind::Finalize);
        if is_finalize {
            let parsed = parse_finalize(&call);
            self.trajectory.result = Some(parsed.result);
            self.trajectory.passed = true;
            self.finished = true;
            return Step {
                thought,
                action: Some(call),
                observation: "Analysis finalized.".into(),
                error_flag: false,
                invalid_flag: false,
            };
        }
        let mut ctx = DispatchContext {
            store: &mut self.store,
            dedup_threshold: self.config.dedup_threshold,
        };
        let outcome = dispatch(&self.registry, &call, &mut ctx);
        Step {
            thought,
            action: Some(call),
            observation: outcome.observation,
            error_flag: outcome.status.is_error() && !outcome.status.is_invalid(),
            invalid_flag: outcome.status.is_invalid(),
        }
    }

    /// Steps until finalize or the budget runs out. A backend failure ends the
    /// run with a diagnostic instead of an error.
    pub fn run(&mut self, backend: &dyn LlmBackend) -> &Trajectory {
        while !self.is_finished() {
            if let Err(e) = self.step(backend) {
                log::warn!("trajectory stopped: {e}");
                self.trajectory.diagnostic = Some(e.to_string());
                self.finished = true;
            }
        }
        if !self.trajectory.passed && self.trajectory.diagnostic.is_none() {
            self.trajectory.diagnostic = Some(format!(
                "no finalize within {} steps",
                self.config.max_steps
            ));
        }
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }
}

fn invalid(thought: String, observation: String) -> Step {
    Step {
        thought,
        action: None,
        observation,
        error_flag: false,
        invalid_flag: true,
    }
}
