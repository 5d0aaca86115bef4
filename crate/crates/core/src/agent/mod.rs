//! The controller agent: prompt assembly, the thought/action/observation
//! loop and trajectory persistence.

mod controller;
mod persist;
mod prompt;

pub use controller::{split_generation, AgentError, Controller, FORMAT_HINT};
pub use persist::{
    prompt_digest, read_trajectory, replay, step_digest, write_trajectory, PersistError,
    ReplayReport, StepRecord, TrajectoryFile, TrajectoryTrailer,
};
pub use prompt::{
    assemble_prompt, assemble_with_system, render_history, BasePrompts, FRAMEWORK_RULES,
    TASK_REQUIREMENTS,
};

use serde::{Deserialize, Serialize};

use crate::llm::{AdaptiveConfig, GenerationParams};
use crate::obsk::DEFAULT_HEAD_LINES;
use crate::structured::RegenConfig;
use crate::tools::{GuardConfig, DEFAULT_DEDUP_THRESHOLD};

pub const DEFAULT_MAX_STEPS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub head_lines: usize,
    pub params: GenerationParams,
    pub prompts: BasePrompts,
    pub adaptive: AdaptiveConfig,
    pub regen: RegenConfig,
    /// Repair and regenerate malformed actions; off means plain parsing only.
    pub json_regen: bool,
    /// Intercept calls that break the error rules.
    pub error_handling: bool,
    pub guard: GuardConfig,
    pub dedup_threshold: f64,
}

impl AgentConfig {
    pub fn new(prompts: BasePrompts) -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            head_lines: DEFAULT_HEAD_LINES,
            params: GenerationParams::greedy(),
            prompts,
            adaptive: AdaptiveConfig::default(),
            regen: RegenConfig::default(),
            json_regen: true,
            error_handling: true,
            guard: GuardConfig::default(),
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if self.head_lines == 0 {
            return Err("head_lines must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return Err("dedup_threshold must lie in [0, 1]".into());
        }
        self.params.validate().map_err(|e| e.to_string())
    }
}
