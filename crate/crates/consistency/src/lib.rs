//! Self-consistency over agent results.
//!
//! `sc_stepwise` re-samples only the generation that produced the greedy
//! finalize. `tsc` branches full sampled continuations from the step before
//! finalize, each with its own snapshot overlay and backend. Candidates are
//! merged field by field.

mod aggregate;

pub use aggregate::{
    aggregate_results, aggregate_with_llm, majority_responsibility, strip_enumeration,
    vote_with_embedding, Aggregation, AggregationOutcome, MERGE_INSTRUCTION, MERGE_SYSTEM,
};

use std::sync::Arc;

use rca_core::agent::{AgentConfig, AgentError, Controller, DEFAULT_MAX_STEPS};
use rca_core::llm::{GenerationParams, LlmBackend, LlmError};
use rca_core::tools::{AnalysisResult, ToolKind, ToolRegistry};
use rca_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLES: usize = 10;
pub const DEFAULT_GLOBAL_STEP_BOUND: usize = DEFAULT_MAX_STEPS;

/// Backend for sample `i`. Each branch gets its own instance.
pub type BackendFactory<'a> = dyn Fn(usize) -> Arc<dyn LlmBackend> + Send + Sync + 'a;

#[derive(Debug, thiserror::Error)]
pub enum ConsistencyError {
    #[error("the greedy trajectory did not finalize; branching is unavailable")]
    GreedyFailed,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// Everything needed to start a controller on one task.
#[derive(Debug, Clone)]
pub struct Environment {
    pub config: AgentConfig,
    pub registry: Arc<ToolRegistry>,
    pub task: String,
}

impl Environment {
    pub fn controller(&self) -> Result<Controller, AgentError> {
        Controller::new(
            self.config.clone(),
            self.registry.clone(),
            self.task.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub result: AnalysisResult,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Greedy,
    Sc,
    Tsc,
}

fn sampled(config: &AgentConfig) -> AgentConfig {
    let mut c = config.clone();
    c.params = GenerationParams {
        max_tokens: config.params.max_tokens,
        ..GenerationParams::sampled()
    };
    c
}

fn candidate_from(trajectory: Trajectory) -> Option<Candidate> {
    let result = trajectory.result.clone().filter(|_| trajectory.passed)?;
    Some(Candidate { result, trajectory })
}

/// Runs the greedy controller to completion.
pub fn run_greedy(
    env: &Environment,
    backend: &dyn LlmBackend,
) -> Result<Controller, ConsistencyError> {
    let mut c = env.controller()?;
    c.run(backend);
    Ok(c)
}

fn finalize_prefix(greedy: &Controller) -> Result<usize, ConsistencyError> {
    let t = greedy.trajectory();
    if !t.passed || t.steps.is_empty() {
        return Err(ConsistencyError::GreedyFailed);
    }
    Ok(t.steps.len() - 1)
}

/// Re-samples the finalize generation `k` times. Only samples that finalize
/// in that same step count.
pub fn sc_stepwise(
    env: &Environment,
    greedy: &Controller,
    backends: &BackendFactory<'_>,
    k: usize,
) -> Result<Vec<Candidate>, ConsistencyError> {
    let prefix = finalize_prefix(greedy)?;
    let config = sampled(&env.config);
    let mut out = Vec::new();
    for i in 0..k {
        let backend = backends(i);
        let mut branch = greedy.branch(prefix, config.clone())?;
        let finalized = match branch.step(backend.as_ref()) {
            Ok(step) => step
                .function()
                .and_then(|f| env.registry.spec(f))
                .is_some_and(|s| s.kind == ToolKind::Finalize),
            Err(e) => {
                log::warn!("sample {i} failed: {e}");
                false
            }
        };
        if finalized {
            out.extend(candidate_from(branch.into_trajectory()));
        } else {
            log::debug!("sample {i} did not finalize synchronously; dropped");
        }
    }
    Ok(out)
}

/// Branches `k` sampled continuations from the step before the greedy
/// finalize. A branch that reaches `global_step_bound` steps without
/// finalizing yields no candidate. Branches run concurrently; results keep
/// branch order.
pub fn tsc(
    env: &Environment,
    greedy: &Controller,
    backends: &BackendFactory<'_>,
    k: usize,
    global_step_bound: usize,
) -> Result<Vec<Candidate>, ConsistencyError> {
    let prefix = finalize_prefix(greedy)?;
    if global_step_bound < greedy.trajectory().steps.len() {
        return Err(ConsistencyError::Config(format!(
            "global step bound {global_step_bound} is below the greedy length {}",
            greedy.trajectory().steps.len()
        )));
    }
    let mut config = sampled(&env.config);
    config.max_steps = global_step_bound;
    let branches: Vec<Controller> = (0..k)
        .map(|_| greedy.branch(prefix, config.clone()))
        .collect::<Result<_, _>>()?;
    let trajectories: Vec<Trajectory> = std::thread::scope(|s| {
        let handles: Vec<_> = branches
            .into_iter()
            .enumerate()
            .map(|(i, mut branch)| {
                let backend = backends(i);
                s.spawn(move || {
                    branch.run(backend.as_ref());
                    branch.into_trajectory()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("branch thread panicked"))
            .collect()
    });
    Ok(trajectories
        .into_iter()
        .filter_map(candidate_from)
        .collect())
}

/// Evaluation baseline only: `k` independent sampled runs from the first step.
pub fn full_process_sampling(
    env: &Environment,
    backends: &BackendFactory<'_>,
    k: usize,
) -> Result<Vec<Candidate>, ConsistencyError> {
    let config = sampled(&env.config);
    let mut out = Vec::new();
    for i in 0..k {
        let mut c = Controller::new(config.clone(), env.registry.clone(), env.task.clone())?;
        c.run(backends(i).as_ref());
        out.extend(candidate_from(c.into_trajectory()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub mode: Mode,
    pub aggregation: Aggregation,
    pub k: usize,
    pub global_step_bound: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Greedy,
            aggregation: Aggregation::EmbeddingVote,
            k: DEFAULT_SAMPLES,
            global_step_bound: DEFAULT_GLOBAL_STEP_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRun {
    pub greedy: Trajectory,
    pub candidates: Vec<Candidate>,
    /// `None` when there was nothing to aggregate.
    pub outcome: Option<AggregationOutcome>,
}

impl ConsistencyRun {
    /// The final answer: the aggregate if any, else the greedy result, else the baseline.
    pub fn result(&self) -> AnalysisResult {
        match (&self.outcome, &self.greedy.result) {
            (Some(o), _) => o.result.clone(),
            (None, Some(r)) if self.greedy.passed => r.clone().filled(),
            _ => AnalysisResult::baseline(),
        }
    }
}

/// Greedy run followed by the selected sampling mode and aggregation.
/// `backend` drives the greedy run and aggregation; `backends` the samples.
pub fn run_with_consistency(
    env: &Environment,
    config: &ConsistencyConfig,
    backend: &dyn LlmBackend,
    backends: &BackendFactory<'_>,
) -> Result<ConsistencyRun, ConsistencyError> {
    if config.k == 0 {
        return Err(ConsistencyError::Config("k must be at least 1".into()));
    }
    let greedy = run_greedy(env, backend)?;
    let candidates = match config.mode {
        Mode::Greedy => candidate_from(greedy.trajectory().clone())
            .into_iter()
            .collect(),
        _ if !greedy.trajectory().passed => {
            log::warn!("greedy trajectory failed; sampling skipped");
            Vec::new()
        }
        Mode::Sc => sc_stepwise(env, &greedy, backends, config.k)?,
        Mode::Tsc => tsc(env, &greedy, backends, config.k, config.global_step_bound)?,
    };
    let outcome = if candidates.is_empty() {
        None
    } else {
        let results: Vec<AnalysisResult> = candidates.iter().map(|c| c.result.clone()).collect();
        Some(aggregate_results(&results, config.aggregation, backend)?)
    };
    Ok(ConsistencyRun {
        greedy: greedy.into_trajectory(),
        candidates,
        outcome,
    })
}
