use std::io::{self, BufRead};

use rca_core::llm::{cosine, EmbeddingVector, LlmBackend, LlmError};
use serde::{Deserialize, Serialize};

/// Chunk-analysis instruction. The response schema is two parallel arrays.
pub const ANALYSIS_INSTRUCTION: &str = "\
You are a log analysis expert for a stream-computing platform. Read the log below and find the \
messages that explain abnormal behaviour of the job. For each finding give a short interpretation and \
the log text that supports it, copied verbatim from the log. Answer with one JSON object of the form \
{\"interpretations\": [\"...\"], \"evidences\": [\"...\"]} where the two arrays have equal length.";

pub const COT_TRIGGER: &str = "Let's think step by step.";
pub const LOG_BEGIN: &str = "### Log to analyze";
pub const LOG_END: &str = "### End of log";
pub const DEFAULT_MAX_PROMPT_LEN: usize = 8000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub example: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalExample {
    pub example_text: String,
    pub answer_text: String,
    pub embedding: EmbeddingVector,
}

/// Case-insensitive substring deny-list applied at ingest time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenyList {
    pub patterns: Vec<String>,
}

impl DenyList {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| p.into().to_lowercase())
                .collect(),
        }
    }

    pub fn blocks(&self, record: &RetrievalRecord) -> bool {
        let example = record.example.to_lowercase();
        let answer = record.answer.to_lowercase();
        self.patterns
            .iter()
            .filter(|p| !p.is_empty())
            .any(|p| example.contains(p.as_str()) || answer.contains(p.as_str()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("embedding failed: {0}")]
    Embed(#[from] LlmError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalIndex {
    pub examples: Vec<RetrievalExample>,
    pub rejected: usize,
}

impl RetrievalIndex {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn read_records(reader: impl io::Read) -> Result<Vec<RetrievalRecord>, IngestError> {
        let mut out = Vec::new();
        for (i, line) in io::BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| IngestError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(rec);
        }
        Ok(out)
    }

    /// Embeds the example side of every record the filter lets through.
    pub fn ingest(
        records: Vec<RetrievalRecord>,
        backend: &dyn LlmBackend,
        filter: &dyn Fn(&RetrievalRecord) -> bool,
    ) -> Result<Self, IngestError> {
        let total = records.len();
        let kept: Vec<RetrievalRecord> = records.into_iter().filter(|r| !filter(r)).collect();
        let rejected = total - kept.len();
        if rejected > 0 {
            log::info!("retrieval ingest: {rejected} of {total} records excluded by filter");
        }
        let texts: Vec<String> = kept.iter().map(|r| r.example.clone()).collect();
        let embeddings = if texts.is_empty() {
            Vec::new()
        } else {
            backend.embed(&texts)?
        };
        let examples = kept
            .into_iter()
            .zip(embeddings)
            .map(|(r, embedding)| RetrievalExample {
                example_text: r.example,
                answer_text: r.answer,
                embedding,
            })
            .collect();
        Ok(Self { examples, rejected })
    }

    pub fn ingest_jsonl(
        reader: impl io::Read,
        backend: &dyn LlmBackend,
        deny: &DenyList,
    ) -> Result<Self, IngestError> {
        Self::ingest(Self::read_records(reader)?, backend, &|r| deny.blocks(r))
    }

    /// Example indices by descending cosine to `query`; ties keep ingest order.
    pub fn ranked(&self, query: &EmbeddingVector) -> Result<Vec<(usize, f64)>, LlmError> {
        let mut scored = self
            .examples
            .iter()
            .enumerate()
            .map(|(i, e)| Ok((i, cosine(&query.values, &e.embedding.values)?)))
            .collect::<Result<Vec<_>, LlmError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedPrompt {
    pub text: String,
    /// Retrieval indices in the order they appear.
    pub included: Vec<usize>,
    pub truncated: bool,
}

impl PackedPrompt {
    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

fn example_block(e: &RetrievalExample) -> String {
    format!(
        "Example log:\n{}\nExample answer:\n{}\n\n",
        e.example_text, e.answer_text
    )
}

fn chunk_section(chunk: &str) -> String {
    format!("{LOG_BEGIN}\n{chunk}\n{LOG_END}\n\n{COT_TRIGGER}")
}

/// Builds the analysis prompt within `max_len` characters. Examples are added
/// in similarity order until the next one does not fit. If the instruction and
/// chunk alone exceed the budget the chunk tail is cut and `truncated` is set.
pub fn pack_icl_prompt(
    chunk: &str,
    chunk_embedding: &EmbeddingVector,
    index: &RetrievalIndex,
    max_len: usize,
) -> Result<PackedPrompt, LlmError> {
    if max_len == 0 {
        return Err(LlmError::Precondition(
            "max prompt length must be positive".into(),
        ));
    }
    let head = format!("{ANALYSIS_INSTRUCTION}\n\n");
    let tail = chunk_section(chunk);
    let head_len = head.chars().count();
    let tail_len = tail.chars().count();
    if head_len + tail_len > max_len {
        let frame = head_len + chunk_section("").chars().count();
        let keep = max_len.saturating_sub(frame);
        let cut: String = chunk.chars().take(keep).collect();
        log::warn!(
            "chunk of {} chars truncated to {keep} to fit the prompt budget",
            chunk.chars().count()
        );
        return Ok(PackedPrompt {
            text: format!("{head}{}", chunk_section(&cut)),
            included: Vec::new(),
            truncated: true,
        });
    }
    let mut used = head_len + tail_len;
    let mut body = String::new();
    let mut included = Vec::new();
    for (i, _) in index.ranked(chunk_embedding)? {
        let block = example_block(&index.examples[i]);
        let l = block.chars().count();
        if used + l > max_len {
            break;
        }
        used += l;
        body.push_str(&block);
        included.push(i);
    }
    Ok(PackedPrompt {
        text: format!("{head}{body}{tail}"),
        included,
        truncated: false,
    })
}
