use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, Context};
use rca_consistency::{run_with_consistency, Environment};
use rca_core::agent::{write_trajectory, AgentConfig};
use rca_core::llm::{HttpBackend, LlmBackend};
use rca_core::tools::ToolRegistry;
use rca_eval::{evaluate, predictions_jsonl, EvalReport, JobOutcome};
use rca_log_expert::LogExpertConfig;
use rca_sandbox::{
    agent_config, build_registry, load_bundle, OperatorConfig, ScenarioBundle, SimulatedOperator,
};
use serde_json::json;

use crate::config::{BackendKind, RunConfig};

enum Source {
    Operator(SimulatedOperator),
    Shared(Arc<dyn LlmBackend>),
}

/// A loaded bundle with its backend, tool registry and controller config.
pub struct Runner {
    config: RunConfig,
    bundle: ScenarioBundle,
    source: Source,
    backend: Arc<dyn LlmBackend>,
    registry: Arc<ToolRegistry>,
    agent: AgentConfig,
}

pub struct JobSummary {
    pub outcome: JobOutcome,
    pub dir: PathBuf,
}

impl JobSummary {
    pub fn line(&self) -> String {
        let t = &self.outcome.trajectory;
        let status = if t.passed { "passed" } else { "failed" };
        let root = self
            .outcome
            .prediction
            .as_ref()
            .map(|r| r.root_cause.as_str())
            .unwrap_or("Unclear");
        format!(
            "{}: {status} in {} steps; root cause: {root}",
            self.outcome.job_id,
            t.steps.len()
        )
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

impl Runner {
    pub fn new(config: RunConfig, scenarios: &Path) -> anyhow::Result<Self> {
        config
            .validate()
            .map_err(|e| anyhow!("invalid configuration: {e}"))?;
        let bundle = load_bundle(scenarios)
            .with_context(|| format!("loading scenarios from {}", scenarios.display()))?;
        let source = match config.backend {
            BackendKind::Mock => Source::Operator(SimulatedOperator::new(
                &bundle,
                OperatorConfig {
                    malformed_rate: config.malformed_rate,
                    seed: config.seed,
                    ..OperatorConfig::default()
                },
            )),
            BackendKind::Http => Source::Shared(Arc::new(HttpBackend::new(config.http.clone())?)),
        };
        let backend: Arc<dyn LlmBackend> = match &source {
            Source::Operator(op) => Arc::new(op.backend()),
            Source::Shared(b) => b.clone(),
        };
        let registry = build_registry(
            &bundle,
            Some(scenarios),
            backend.clone(),
            LogExpertConfig::default(),
        )?;
        let mut agent = agent_config(&registry)?;
        config.apply_to(&mut agent);
        agent
            .validate()
            .map_err(|e| anyhow!("invalid agent configuration: {e}"))?;
        Ok(Self {
            config,
            bundle,
            source,
            backend,
            registry: Arc::new(registry),
            agent,
        })
    }

    pub fn bundle(&self) -> &ScenarioBundle {
        &self.bundle
    }

    fn sample_backend(&self) -> Arc<dyn LlmBackend> {
        match &self.source {
            Source::Operator(op) => Arc::new(op.backend()),
            Source::Shared(b) => b.clone(),
        }
    }

    /// Runs one job and writes `trajectory.jsonl`, `result.json` and, for
    /// sampling modes, `candidates/<i>.jsonl` under `dir`.
    pub fn run_job(&self, job_id: &str, dir: &Path) -> anyhow::Result<JobSummary> {
        let scenario = self
            .bundle
            .scenario(job_id)
            .ok_or_else(|| anyhow!("unknown job id {job_id:?}"))?;
        let env = Environment {
            config: self.agent.clone(),
            registry: self.registry.clone(),
            task: scenario.task(),
        };
        let factory = |_i: usize| self.sample_backend();
        let run = run_with_consistency(
            &env,
            &self.config.consistency(),
            self.backend.as_ref(),
            &factory,
        )?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let system_prompt = self.agent.prompts.system_prompt();
        write_trajectory(&dir.join("trajectory.jsonl"), &system_prompt, &run.greedy)?;
        if !run.candidates.is_empty() && self.config.mode != crate::ModeArg::Greedy {
            let cdir = dir.join("candidates");
            fs::create_dir_all(&cdir)?;
            for (i, c) in run.candidates.iter().enumerate() {
                write_trajectory(
                    &cdir.join(format!("{i}.jsonl")),
                    &system_prompt,
                    &c.trajectory,
                )?;
            }
        }
        let prediction = (run.greedy.passed || run.outcome.is_some()).then(|| run.result());
        write_json(
            &dir.join("result.json"),
            &json!({
                "job_id": job_id,
                "passed": run.greedy.passed,
                "steps": run.greedy.steps.len(),
                "mode": self.config.mode,
                "aggregate": self.config.aggregate,
                "candidates": run.candidates.len(),
                "result": prediction,
                "aggregation": run.outcome,
            }),
        )?;
        Ok(JobSummary {
            outcome: JobOutcome {
                job_id: job_id.to_string(),
                trajectory: run.greedy,
                prediction,
                reference: scenario.ground_truth.clone(),
            },
            dir: dir.to_path_buf(),
        })
    }

    /// Every job of the bundle on up to `jobs` threads, then the evaluation
    /// report (`report.json`) and per-field predictions (`predictions.jsonl`).
    pub fn run_batch(&self, out: &Path) -> anyhow::Result<EvalReport> {
        let ids: Vec<&str> = self
            .bundle
            .scenarios
            .iter()
            .map(|s| s.job.job_id.as_str())
            .collect();
        let slots: Mutex<Vec<Option<anyhow::Result<JobOutcome>>>> =
            Mutex::new((0..ids.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.config.jobs.min(ids.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(id) = ids.get(i) else { break };
                    let r = self
                        .run_job(id, &out.join("jobs").join(id))
                        .map(|s| s.outcome);
                    slots.lock().expect("result slots")[i] = Some(r);
                });
            }
        });
        let outcomes: Vec<JobOutcome> = slots
            .into_inner()
            .expect("result slots")
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect::<anyhow::Result<_>>()?;
        let report = evaluate(&outcomes, self.backend.as_ref())?;
        fs::create_dir_all(out)?;
        write_json(&out.join("report.json"), &serde_json::to_value(&report)?)?;
        fs::write(out.join("predictions.jsonl"), predictions_jsonl(&outcomes))?;
        Ok(report)
    }
}
