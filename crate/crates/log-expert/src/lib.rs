//! Log analysis expert.
//!
//! A long log is split into lines, embedded, and linked into a windowed
//! similarity graph. Louvain communities, made contiguous, become chunks. Each
//! chunk is analysed with retrieved examples packed into a budgeted prompt, the
//! answers are checked against the chunk text, and the surviving findings are
//! summarised.

mod analysis;
mod graph;
mod icl;
mod louvain;
mod overlap;

pub use analysis::{
    analyze_chunk, evidence_accepted, filter_evidence, summarize, ChunkAnalysis, LogSummary,
    ANALYST_SYSTEM, NO_EVIDENCE, SUMMARY_INSTRUCTION,
};
pub use graph::{build_graph, split_log, SimilarityGraph, DEFAULT_TAU, DEFAULT_WINDOW};
pub use icl::{
    pack_icl_prompt, DenyList, IngestError, PackedPrompt, RetrievalExample, RetrievalIndex,
    RetrievalRecord, ANALYSIS_INSTRUCTION, COT_TRIGGER, DEFAULT_MAX_PROMPT_LEN, LOG_BEGIN, LOG_END,
};
pub use louvain::{canonical_labels, louvain, modularity};
pub use overlap::{flips, is_contiguous, remove_overlaps};

use std::ops::Range;
use std::sync::Arc;

use rca_core::llm::{LlmBackend, LlmError};
use rca_core::structured::{StructuredError, SubstitutionTable, DEFAULT_RETRY_LIMIT};
use rca_core::tools::{
    ParamSpec, ParamType, ToolError, ToolKind, ToolOutput, ToolRegistry, ToolSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const TOOL_NAME: &str = "log_agent";

#[derive(Debug, thiserror::Error)]
pub enum LogExpertError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Structured(#[from] StructuredError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogExpertConfig {
    pub window: usize,
    pub tau: f64,
    pub max_prompt_len: usize,
    pub retry_limit: u32,
}

impl Default for LogExpertConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            tau: DEFAULT_TAU,
            max_prompt_len: DEFAULT_MAX_PROMPT_LEN,
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogChunk {
    /// Line index range in the split log.
    pub range: Range<usize>,
    pub lines: Vec<String>,
}

impl LogChunk {
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

/// Contiguous chunks covering `lines` in order, one per label run.
pub fn chunks_from_labels(lines: &[String], labels: &[usize]) -> Vec<LogChunk> {
    assert_eq!(lines.len(), labels.len(), "one label per line");
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=lines.len() {
        if i == lines.len() || labels[i] != labels[start] {
            out.push(LogChunk {
                range: start..i,
                lines: lines[start..i].to_vec(),
            });
            start = i;
        }
    }
    out
}

/// Splits, embeds, clusters and makes the clusters contiguous.
pub fn partition(
    log: &str,
    backend: &dyn LlmBackend,
    window: usize,
    tau: f64,
) -> Result<Vec<LogChunk>, LlmError> {
    let lines = split_log(log);
    if lines.is_empty() {
        return Ok(Vec::new());
    }
    let embeddings: Vec<Vec<f64>> = backend
        .embed(&lines)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let graph = build_graph(&embeddings, window, tau)?;
    let labels = remove_overlaps(&louvain(&graph));
    Ok(chunks_from_labels(&lines, &labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkReport {
    pub chunk: LogChunk,
    pub prompt_truncated: bool,
    pub examples_used: usize,
    pub raw: ChunkAnalysis,
    pub kept: ChunkAnalysis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogExpertReport {
    pub chunks: Vec<ChunkReport>,
    pub summary: LogSummary,
}

impl LogExpertReport {
    pub fn kept_pairs(&self) -> ChunkAnalysis {
        let mut all = ChunkAnalysis::default();
        for c in &self.chunks {
            all.interpretations
                .extend(c.kept.interpretations.iter().cloned());
            all.evidences.extend(c.kept.evidences.iter().cloned());
        }
        all
    }
}

#[derive(Debug, Clone, Default)]
pub struct LogExpert {
    pub config: LogExpertConfig,
    pub index: Arc<RetrievalIndex>,
}

impl LogExpert {
    pub fn new(config: LogExpertConfig, index: Arc<RetrievalIndex>) -> Self {
        Self { config, index }
    }

    pub fn run(
        &self,
        backend: &dyn LlmBackend,
        log: &str,
    ) -> Result<LogExpertReport, LogExpertError> {
        let chunks = partition(log, backend, self.config.window, self.config.tau)?;
        let table = SubstitutionTable::default();
        let mut reports = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            let text = chunk.text();
            let embedding = backend.embed_one(&text)?;
            let packed = pack_icl_prompt(
                &table.apply(&text),
                &embedding,
                &self.index,
                self.config.max_prompt_len,
            )?;
            let raw = analyze_chunk(backend, &packed.text, self.config.retry_limit)?;
            let kept = filter_evidence(&raw, &text);
            reports.push(ChunkReport {
                chunk,
                prompt_truncated: packed.truncated,
                examples_used: packed.included.len(),
                raw,
                kept,
            });
        }
        let mut report = LogExpertReport {
            chunks: reports,
            summary: LogSummary {
                interpretation: String::new(),
                evidence: String::new(),
            },
        };
        report.summary = summarize(backend, &report.kept_pairs(), self.config.retry_limit)?;
        Ok(report)
    }
}

pub fn tool_spec() -> ToolSpec {
    ToolSpec {
        name: TOOL_NAME.into(),
        description: "Analyse a long log with a log expert. Pass the snapshot key of an earlier observation; \
returns an interpretation of the anomaly and the supporting log text."
            .into(),
        params: vec![ParamSpec::required("snapshot", ParamType::Snapshot, "Snapshot key of the log to analyse.")],
        kind: ToolKind::Expert,
        stateless: true,
    }
}

/// Registers the log expert as a tool backed by `backend`.
pub fn register(
    registry: &mut ToolRegistry,
    expert: LogExpert,
    backend: Arc<dyn LlmBackend>,
) -> Result<(), ToolError> {
    registry.register(
        tool_spec(),
        Arc::new(move |kwargs: &Map<String, Value>| {
            let text = match kwargs.get("snapshot") {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => return Err(ToolError::Failed("missing snapshot".into())),
            };
            let report = expert
                .run(backend.as_ref(), &text)
                .map_err(|e| ToolError::Failed(e.to_string()))?;
            Ok(ToolOutput::Text(report.summary.render()))
        }),
    )
}
