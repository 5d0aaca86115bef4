use std::path::Path;

use clap::ValueEnum;
use rca_consistency::{
    Aggregation, ConsistencyConfig, Mode, DEFAULT_GLOBAL_STEP_BOUND, DEFAULT_SAMPLES,
};
use rca_core::agent::{AgentConfig, DEFAULT_MAX_STEPS};
use rca_core::llm::HttpBackendConfig;
use rca_sandbox::DEFAULT_MALFORMED_RATE;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Simulated operator over the scenario bundle; no network.
    Mock,
    /// OpenAI-compatible server.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Greedy,
    Sc,
    Tsc,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Greedy => Mode::Greedy,
            ModeArg::Sc => Mode::Sc,
            ModeArg::Tsc => Mode::Tsc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AggregateArg {
    Vote,
    Llm,
}

impl From<AggregateArg> for Aggregation {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Vote => Aggregation::EmbeddingVote,
            AggregateArg::Llm => Aggregation::LlmAggregate,
        }
    }
}

/// Everything a diagnose or batch run needs. Built from defaults, then the
/// optional TOML file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub http: HttpBackendConfig,
    pub mode: ModeArg,
    pub aggregate: AggregateArg,
    pub k: usize,
    pub global_step_bound: usize,
    pub max_steps: usize,
    pub json_regen: bool,
    pub error_handling: bool,
    /// Seed of the simulated operator.
    pub seed: u64,
    /// Share of simulated-operator actions that come out malformed.
    pub malformed_rate: f64,
    pub jobs: usize,
    /// Batch exits non-zero below this pass rate, in percent.
    pub pass_rate_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            http: HttpBackendConfig::default(),
            mode: ModeArg::Greedy,
            aggregate: AggregateArg::Vote,
            k: DEFAULT_SAMPLES,
            global_step_bound: DEFAULT_GLOBAL_STEP_BOUND,
            max_steps: DEFAULT_MAX_STEPS,
            json_regen: true,
            error_handling: true,
            seed: 0,
            malformed_rate: DEFAULT_MALFORMED_RATE,
            jobs: 1,
            pass_rate_floor: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.max_steps == 0 {
            return Err("max-steps must be at least 1".into());
        }
        if self.global_step_bound < 2 {
            return Err("global step bound must be at least 2".into());
        }
        if self.jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.malformed_rate) {
            return Err("malformed rate must lie in [0, 1]".into());
        }
        if !(0.0..=100.0).contains(&self.pass_rate_floor) {
            return Err("pass rate floor must lie in [0, 100]".into());
        }
        if self.backend == BackendKind::Http && self.http.endpoint.trim().is_empty() {
            return Err("the http backend needs an endpoint".into());
        }
        Ok(())
    }

    pub fn consistency(&self) -> ConsistencyConfig {
        ConsistencyConfig {
            mode: self.mode.into(),
            aggregation: self.aggregate.into(),
            k: self.k,
            global_step_bound: self.global_step_bound,
        }
    }

    pub fn apply_to(&self, agent: &mut AgentConfig) {
        agent.max_steps = self.max_steps;
        agent.json_regen = self.json_regen;
        agent.error_handling = self.error_handling;
    }
}
