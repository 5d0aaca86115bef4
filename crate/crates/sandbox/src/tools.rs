use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rca_code_expert::{CodeExpert, CodeExpertError, RepoIndex};
use rca_core::llm::LlmBackend;
use rca_core::tools::{
    ParamSpec, ParamType, ToolError, ToolKind, ToolOutput, ToolRegistry, ToolSpec,
};
use rca_log_expert::{
    DenyList, IngestError, LogExpert, LogExpertConfig, RetrievalIndex, RetrievalRecord,
};
use serde_json::{Map, Value};

use crate::scenario::{LogLevel, Scenario, ScenarioBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoSource {
    Log(LogLevel),
    Advisor,
}

impl InfoSource {
    pub const ALL: [InfoSource; 4] = [
        InfoSource::Log(LogLevel::Runtime),
        InfoSource::Log(LogLevel::Platform),
        InfoSource::Log(LogLevel::Infrastructure),
        InfoSource::Advisor,
    ];

    pub fn tool_name(self) -> &'static str {
        match self {
            Self::Log(LogLevel::Runtime) => "runtime_log",
            Self::Log(LogLevel::Platform) => "platform_log",
            Self::Log(LogLevel::Infrastructure) => "infrastructure_log",
            Self::Advisor => "advisor_history",
        }
    }

    fn description(self) -> &'static str {
        match self {
            Self::Log(LogLevel::Runtime) => {
                "Runtime log of the job: task, operator, source and sink messages."
            }
            Self::Log(LogLevel::Platform) => {
                "Platform log of the job: scheduling, containers and platform services."
            }
            Self::Log(LogLevel::Infrastructure) => {
                "Infrastructure log of the hosts that ran the job."
            }
            Self::Advisor => "Earlier suggestions an automated advisor recorded for the job.",
        }
    }
}

/// Per-job records served by the information tools. Only records strictly
/// before the detection time are ever returned.
#[derive(Debug, Clone, Default)]
pub struct JobStore {
    jobs: BTreeMap<String, Scenario>,
}

impl JobStore {
    pub fn from_bundle(bundle: &ScenarioBundle) -> Self {
        Self {
            jobs: bundle
                .scenarios
                .iter()
                .map(|s| (s.job.job_id.clone(), s.clone()))
                .collect(),
        }
    }

    pub fn scenario(&self, job_id: &str) -> Option<&Scenario> {
        self.jobs.get(job_id)
    }

    pub fn entries(&self, job_id: &str, source: InfoSource) -> Result<Vec<String>, ToolError> {
        let s = self
            .jobs
            .get(job_id)
            .ok_or_else(|| ToolError::Failed(format!("unknown job id {job_id:?}")))?;
        let cutoff = s.job.detection_time;
        Ok(match source {
            InfoSource::Log(level) => s
                .logs
                .iter()
                .filter(|e| e.level == level && e.timestamp < cutoff)
                .map(|e| e.render())
                .collect(),
            InfoSource::Advisor => s
                .advisor
                .iter()
                .filter(|a| a.timestamp < cutoff)
                .map(|a| a.render())
                .collect(),
        })
    }
}

pub fn info_spec(source: InfoSource) -> ToolSpec {
    ToolSpec {
        name: source.tool_name().into(),
        description: source.description().into(),
        params: vec![ParamSpec::required(
            "job_id",
            ParamType::String,
            "Identifier of the job, e.g. job-0a1b2c3d.",
        )],
        kind: ToolKind::Info,
        stateless: true,
    }
}

pub fn register_info_tools(
    registry: &mut ToolRegistry,
    store: Arc<JobStore>,
) -> Result<(), ToolError> {
    for source in InfoSource::ALL {
        let store = store.clone();
        registry.register(
            info_spec(source),
            Arc::new(move |kwargs: &Map<String, Value>| {
                let id = kwargs
                    .get("job_id")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .trim();
                store.entries(id, source).map(ToolOutput::Entries)
            }),
        )?;
    }
    Ok(())
}

/// Source index over the bundle's `src/` tree.
pub fn code_repo_binding(bundle_root: &Path) -> Result<RepoIndex, CodeExpertError> {
    RepoIndex::with_default_externals(&bundle_root.join("src"))
}

/// Knowledge records that state blanket responsibility rules are kept out
/// of the example pool.
pub fn knowledge_deny_list() -> DenyList {
    DenyList::new(["responsibility rule"])
}

pub fn retrieval_index(
    bundle: &ScenarioBundle,
    backend: &dyn LlmBackend,
) -> Result<RetrievalIndex, IngestError> {
    let deny = knowledge_deny_list();
    let records = bundle
        .knowledge
        .iter()
        .map(|k| RetrievalRecord {
            example: k.example.clone(),
            answer: k.answer.clone(),
        })
        .collect();
    RetrievalIndex::ingest(records, backend, &|r| deny.blocks(r))
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Code(#[from] CodeExpertError),
}

/// Info tools, both experts and finalize, in that order. The code expert is
/// only registered when a bundle root with sources is given.
pub fn build_registry(
    bundle: &ScenarioBundle,
    bundle_root: Option<&Path>,
    backend: Arc<dyn LlmBackend>,
    log_config: LogExpertConfig,
) -> Result<ToolRegistry, SandboxError> {
    let mut registry = ToolRegistry::new();
    register_info_tools(&mut registry, Arc::new(JobStore::from_bundle(bundle)))?;
    let index = retrieval_index(bundle, backend.as_ref())?;
    rca_log_expert::register(
        &mut registry,
        LogExpert::new(log_config, Arc::new(index)),
        backend.clone(),
    )?;
    if let Some(root) = bundle_root.filter(|r| r.join("src").is_dir()) {
        let repo = code_repo_binding(root)?;
        rca_code_expert::register(&mut registry, CodeExpert::new(Arc::new(repo)), backend)?;
    }
    registry.register_finalize()?;
    Ok(registry)
}
