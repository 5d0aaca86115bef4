use serde::{Deserialize, Serialize};

use super::{
    ApproxTokenCounter, ChatExchange, GenerationParams, LlmBackend, LlmError, TokenCounter,
};

/// Penalty increment applied to both repetition and frequency penalties per restart.
pub const PENALTY_STEP: f64 = 0.5;
pub const DEFAULT_RESTART_THRESHOLD: usize = 4096;
pub const DEFAULT_MAX_ESCALATIONS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Generations longer than this many tokens are treated as looping.
    pub restart_threshold: usize,
    pub max_escalations: u32,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            restart_threshold: DEFAULT_RESTART_THRESHOLD,
            max_escalations: DEFAULT_MAX_ESCALATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutput {
    pub text: String,
    pub attempts: u32,
    /// Params used for the returned generation.
    pub final_params: GenerationParams,
    /// Set when the escalation budget ran out and the returned text is still over threshold.
    pub over_threshold: bool,
}

/// Generates with a repetition guard: any output above the token threshold is
/// discarded and regenerated with both penalties raised by [`PENALTY_STEP`],
/// up to `max_escalations` times.
pub fn generate_adaptive(
    backend: &dyn LlmBackend,
    exchange: &ChatExchange,
    params: &GenerationParams,
    config: &AdaptiveConfig,
) -> Result<AdaptiveOutput, LlmError> {
    generate_adaptive_with(backend, exchange, params, config, &ApproxTokenCounter)
}

pub fn generate_adaptive_with(
    backend: &dyn LlmBackend,
    exchange: &ChatExchange,
    params: &GenerationParams,
    config: &AdaptiveConfig,
    counter: &dyn TokenCounter,
) -> Result<AdaptiveOutput, LlmError> {
    if config.restart_threshold == 0 {
        return Err(LlmError::Precondition(
            "restart_threshold must be positive".into(),
        ));
    }
    let mut current = params.clone();
    let mut attempts = 0;
    loop {
        let text = backend.complete(exchange, &current)?;
        attempts += 1;
        let over = counter.count(&text) > config.restart_threshold;
        if !over || attempts > config.max_escalations {
            if over {
                log::warn!(
                    "generation still exceeds {} tokens after {} escalation(s)",
                    config.restart_threshold,
                    config.max_escalations
                );
            }
            return Ok(AdaptiveOutput {
                text,
                attempts,
                final_params: current,
                over_threshold: over,
            });
        }
        current.repetition_penalty += PENALTY_STEP;
        current.frequency_penalty += PENALTY_STEP;
    }
}
