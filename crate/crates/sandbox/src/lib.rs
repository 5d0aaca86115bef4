//! Synthetic incident sandbox: seeded scenario bundles, time-filtered
//! information tools and a simulated operator for offline runs.

mod bundle;
mod operator;
mod scenario;
mod tools;

pub use bundle::{job_dir, load_bundle, load_scenario, write_bundle, BundleError, Manifest};
pub use operator::{
    injected, Malformation, OperatorConfig, SimulatedOperator, DEFAULT_MALFORMED_RATE,
};
pub use scenario::{
    generate_scenarios, task_statement, AdvisorRecord, JobRecord, KnowledgeRecord, LogEntry,
    LogLevel, Scenario, ScenarioBundle, SourceFile,
};
pub use tools::{
    build_registry, code_repo_binding, info_spec, knowledge_deny_list, register_info_tools,
    retrieval_index, InfoSource, JobStore, SandboxError,
};

use rca_core::agent::{AgentConfig, BasePrompts};
use rca_core::tools::{render_documentation, ToolError, ToolRegistry};

/// Default controller configuration with documentation for `registry`.
pub fn agent_config(registry: &ToolRegistry) -> Result<AgentConfig, ToolError> {
    Ok(AgentConfig::new(BasePrompts::with_tool_docs(
        render_documentation(registry)?,
    )))
}
