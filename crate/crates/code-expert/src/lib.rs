//! Code analysis expert: finds the file of a class, asks the model to analyse
//! it and name further classes worth reading, and follows those suggestions
//! breadth first until nothing new is suggested, only external classes remain,
//! or the file cap is hit. The collected analyses are summarised at the end.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rca_core::llm::{ChatExchange, GenerationParams, LlmBackend, LlmError};
use rca_core::structured::{json_regen, StructuredError, SubstitutionTable, DEFAULT_RETRY_LIMIT};
use rca_core::tools::{
    ParamSpec, ParamType, ToolError, ToolKind, ToolOutput, ToolRegistry, ToolSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use walkdir::WalkDir;

pub const TOOL_NAME: &str = "code_agent";
pub const DEFAULT_MAX_FILES: usize = 12;
pub const CLASS_NOT_FOUND: &str = "class not found in repository";

pub const DEFAULT_EXTERNAL_PREFIXES: &[&str] = &[
    "java.",
    "javax.",
    "scala.",
    "kotlin.",
    "org.apache.",
    "com.google.",
    "com.fasterxml.",
    "org.slf4j.",
    "io.netty.",
    "org.elasticsearch.",
];

pub const ANALYZE_INSTRUCTION: &str = "\
You are reviewing source code of a streaming job to explain a runtime anomaly. Analyse the file below: \
what it does, and anything that could cause the anomaly. Then list other classes whose source would help \
the investigation. Answer with one JSON object of the form \
{\"analysis\": \"...\", \"suggestions\": [\"ClassName\", ...]}. Use an empty list when nothing else is worth reading.";

pub const SUMMARY_INSTRUCTION: &str = "\
Summarise the code analyses below into one explanation of how the code could cause the anomaly, \
naming the classes and methods involved.";

pub const SYSTEM: &str = "You are an expert software engineer helping with incident analysis.";

#[derive(Debug, thiserror::Error)]
pub enum CodeExpertError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Structured(#[from] StructuredError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Found(PathBuf),
    External,
    NotFound,
}

/// Maps class names (file stems) to files under a source root.
#[derive(Debug, Clone, Default)]
pub struct RepoIndex {
    pub root: PathBuf,
    pub files: BTreeMap<String, PathBuf>,
    pub external_prefixes: Vec<String>,
    /// Stems that matched more than one file.
    pub ambiguous: Vec<String>,
}

fn depth(p: &Path) -> usize {
    p.components().count()
}

impl RepoIndex {
    /// Indexes every regular file below `root`. For duplicate stems the
    /// shallower path wins, then the lexicographically smaller one.
    pub fn build(root: &Path, external_prefixes: Vec<String>) -> Result<Self, CodeExpertError> {
        if !root.is_dir() {
            return Err(CodeExpertError::Config(format!(
                "{} is not a directory",
                root.display()
            )));
        }
        let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut ambiguous = Vec::new();
        for entry in WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(Result::ok)
        {
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_path_buf();
            let Some(stem) = rel.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            match files.get(&stem) {
                None => {
                    files.insert(stem, rel);
                }
                Some(existing) => {
                    log::warn!(
                        "class {stem} matches both {} and {}",
                        existing.display(),
                        rel.display()
                    );
                    if !ambiguous.contains(&stem) {
                        ambiguous.push(stem.clone());
                    }
                    let better = (depth(&rel), &rel) < (depth(existing), existing);
                    if better {
                        files.insert(stem, rel);
                    }
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            files,
            external_prefixes,
            ambiguous,
        })
    }

    pub fn with_default_externals(root: &Path) -> Result<Self, CodeExpertError> {
        Self::build(
            root,
            DEFAULT_EXTERNAL_PREFIXES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }

    pub fn is_external(&self, class_name: &str) -> bool {
        self.external_prefixes
            .iter()
            .any(|p| class_name.starts_with(p.as_str()))
    }

    /// Exact stem match on the simple name. External names never resolve.
    pub fn find_class_file(&self, class_name: &str) -> Lookup {
        let name = class_name.trim();
        if self.is_external(name) {
            return Lookup::External;
        }
        let simple = name.rsplit('.').next().unwrap_or(name);
        match self.files.get(simple) {
            Some(rel) => Lookup::Found(self.root.join(rel)),
            None => Lookup::NotFound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileAnalysis {
    pub class_name: String,
    pub analysis: String,
    pub suggestions: Vec<String>,
}

/// One analysis call. Suggestions already in `visited` are dropped.
pub fn analyze_file(
    backend: &dyn LlmBackend,
    class_name: &str,
    source: &str,
    visited: &HashSet<String>,
    retry_limit: u32,
) -> Result<FileAnalysis, CodeExpertError> {
    let table = SubstitutionTable::default();
    let prompt = format!(
        "{ANALYZE_INSTRUCTION}\n\nClass: {class_name}\n### Source\n{}\n### End of source",
        table.apply(source)
    );
    let raw = backend.complete(
        &ChatExchange::single(SYSTEM, prompt),
        &GenerationParams::greedy(),
    )?;
    let outcome = json_regen(backend, &raw, retry_limit)?;
    let obj = outcome.object().filter(|_| outcome.is_ok());
    let analysis = obj
        .and_then(|o| o.get("analysis"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| raw.trim().to_string());
    let mut suggestions = Vec::new();
    if let Some(Value::Array(items)) = obj.and_then(|o| o.get("suggestions")) {
        for item in items {
            if let Some(s) = item.as_str().map(str::trim).filter(|s| !s.is_empty()) {
                if !visited.contains(s) && !suggestions.iter().any(|x: &String| x == s) {
                    suggestions.push(s.to_string());
                }
            }
        }
    }
    Ok(FileAnalysis {
        class_name: class_name.to_string(),
        analysis: table.invert(&analysis),
        suggestions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeExpertReport {
    pub root_found: bool,
    pub analyses: Vec<FileAnalysis>,
    pub external: Vec<String>,
    pub missing: Vec<String>,
    pub summary: String,
}

pub fn run_code_expert(
    backend: &dyn LlmBackend,
    index: &RepoIndex,
    root_class: &str,
    max_files: usize,
    retry_limit: u32,
) -> Result<CodeExpertReport, CodeExpertError> {
    if max_files == 0 {
        return Err(CodeExpertError::Config(
            "max_files must be at least 1".into(),
        ));
    }
    let mut report = CodeExpertReport {
        root_found: false,
        analyses: Vec::new(),
        external: Vec::new(),
        missing: Vec::new(),
        summary: String::new(),
    };
    if !matches!(index.find_class_file(root_class), Lookup::Found(_)) {
        report.summary = CLASS_NOT_FOUND.to_string();
        return Ok(report);
    }
    report.root_found = true;
    let mut visited: HashSet<String> = HashSet::from([root_class.to_string()]);
    let mut queue: VecDeque<String> = VecDeque::from([root_class.to_string()]);
    while let Some(class) = queue.pop_front() {
        if report.analyses.len() >= max_files {
            log::info!("code expert stopped at the cap of {max_files} files");
            break;
        }
        let path = match index.find_class_file(&class) {
            Lookup::Found(p) => p,
            Lookup::External => {
                report.external.push(class);
                continue;
            }
            Lookup::NotFound => {
                report.missing.push(class);
                continue;
            }
        };
        let source = match std::fs::read(&path) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => {
                log::warn!("cannot read {}: {e}", path.display());
                report.missing.push(class);
                continue;
            }
        };
        let analysis = analyze_file(backend, &class, &source, &visited, retry_limit)?;
        for s in &analysis.suggestions {
            if visited.insert(s.clone()) {
                queue.push_back(s.clone());
            }
        }
        report.analyses.push(analysis);
    }
    report.summary = summarize(backend, &report.analyses)?;
    Ok(report)
}

fn summarize(
    backend: &dyn LlmBackend,
    analyses: &[FileAnalysis],
) -> Result<String, CodeExpertError> {
    let table = SubstitutionTable::default();
    let mut prompt = format!("{SUMMARY_INSTRUCTION}\n");
    for a in analyses {
        prompt.push_str(&format!(
            "\nClass {}:\n{}\n",
            a.class_name,
            table.apply(&a.analysis)
        ));
    }
    let text = backend.complete(
        &ChatExchange::single(SYSTEM, prompt),
        &GenerationParams::greedy(),
    )?;
    Ok(table.invert(text.trim()))
}

#[derive(Debug, Clone)]
pub struct CodeExpert {
    pub index: Arc<RepoIndex>,
    pub max_files: usize,
    pub retry_limit: u32,
}

impl CodeExpert {
    pub fn new(index: Arc<RepoIndex>) -> Self {
        Self {
            index,
            max_files: DEFAULT_MAX_FILES,
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }
}

pub fn tool_spec() -> ToolSpec {
    ToolSpec {
        name: TOOL_NAME.into(),
        description: "Analyse the source code of a class and the classes it leads to; returns a summary of how the \
code relates to the anomaly."
            .into(),
        params: vec![ParamSpec::required("class_name", ParamType::String, "Name of the class to analyse.")],
        kind: ToolKind::Expert,
        stateless: true,
    }
}

pub fn register(
    registry: &mut ToolRegistry,
    expert: CodeExpert,
    backend: Arc<dyn LlmBackend>,
) -> Result<(), ToolError> {
    registry.register(
        tool_spec(),
        Arc::new(move |kwargs: &Map<String, Value>| {
            let class = kwargs
                .get("class_name")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .trim()
                .to_string();
            let report = run_code_expert(
                backend.as_ref(),
                &expert.index,
                &class,
                expert.max_files,
                expert.retry_limit,
            )
            .map_err(|e| ToolError::Failed(e.to_string()))?;
            Ok(ToolOutput::Text(report.summary))
        }),
    )
}
