use rca_core::llm::{ChatExchange, GenerationParams, LlmBackend};
use rca_core::structured::{json_regen, StructuredError, SubstitutionTable};
use rca_core::text::levenshtein_chars;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const NO_EVIDENCE: &str = "No analyzable evidence found.";

pub const ANALYST_SYSTEM: &str =
    "You are a careful log analyst. Follow the instructions exactly and answer in JSON.";

pub const SUMMARY_INSTRUCTION: &str = "\
Combine the findings below into one diagnosis. Answer with one JSON object of the form \
{\"interpretation\": \"<summary of what went wrong>\", \"evidence\": \"<the most relevant log text, verbatim>\"}.";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkAnalysis {
    pub interpretations: Vec<String>,
    pub evidences: Vec<String>,
}

impl ChunkAnalysis {
    pub fn len(&self) -> usize {
        self.interpretations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interpretations.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.interpretations
            .iter()
            .map(String::as_str)
            .zip(self.evidences.iter().map(String::as_str))
    }
}

fn strings(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    }
}

/// Runs one chunk prompt. Evidence comes back with prompt substitutions undone.
/// A response that cannot be repaired yields an empty analysis.
pub fn analyze_chunk(
    backend: &dyn LlmBackend,
    prompt: &str,
    retry_limit: u32,
) -> Result<ChunkAnalysis, StructuredError> {
    let raw = backend
        .complete(
            &ChatExchange::single(ANALYST_SYSTEM, prompt),
            &GenerationParams::greedy(),
        )
        .map_err(|source| StructuredError::Backend {
            attempts: 0,
            source,
        })?;
    let outcome = json_regen(backend, &raw, retry_limit)?;
    let Some(obj) = outcome.object() else {
        log::warn!("chunk analysis could not be parsed; chunk skipped");
        return Ok(ChunkAnalysis::default());
    };
    let mut interpretations = strings(obj.get("interpretations"));
    let mut evidences = strings(obj.get("evidences"));
    if interpretations.len() != evidences.len() {
        log::warn!(
            "chunk analysis has {} interpretations and {} evidences; keeping matched pairs",
            interpretations.len(),
            evidences.len()
        );
        let n = interpretations.len().min(evidences.len());
        interpretations.truncate(n);
        evidences.truncate(n);
    }
    let table = SubstitutionTable::default();
    let evidences = evidences.iter().map(|e| table.invert(e)).collect();
    Ok(ChunkAnalysis {
        interpretations,
        evidences,
    })
}

/// Acceptance test for one evidence string against its chunk.
pub fn evidence_accepted(evidence: &str, chunk: &str) -> bool {
    if evidence.is_empty() {
        return false;
    }
    let e: Vec<char> = evidence.chars().collect();
    let p: Vec<char> = chunk.chars().collect();
    let d = levenshtein_chars(&e, &p) as f64;
    d < p.len() as f64 - 0.9 * e.len() as f64
}

/// Drops pairs whose evidence does not occur, nearly verbatim, in the chunk.
pub fn filter_evidence(analysis: &ChunkAnalysis, chunk: &str) -> ChunkAnalysis {
    let mut out = ChunkAnalysis::default();
    for (r, e) in analysis.pairs() {
        if evidence_accepted(e, chunk) {
            out.interpretations.push(r.to_string());
            out.evidences.push(e.to_string());
        } else {
            log::debug!("evidence rejected as unsupported: {e:?}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSummary {
    pub interpretation: String,
    pub evidence: String,
}

impl LogSummary {
    pub fn render(&self) -> String {
        if self.evidence.is_empty() {
            return self.interpretation.clone();
        }
        format!(
            "Interpretation: {}\nEvidence: {}",
            self.interpretation, self.evidence
        )
    }
}

/// One call over every kept pair. No pairs means no call and the sentinel text.
pub fn summarize(
    backend: &dyn LlmBackend,
    kept: &ChunkAnalysis,
    retry_limit: u32,
) -> Result<LogSummary, StructuredError> {
    if kept.is_empty() {
        return Ok(LogSummary {
            interpretation: NO_EVIDENCE.into(),
            evidence: String::new(),
        });
    }
    let table = SubstitutionTable::default();
    let mut prompt = format!("{SUMMARY_INSTRUCTION}\n\nFindings:\n");
    for (i, (r, e)) in kept.pairs().enumerate() {
        prompt.push_str(&format!(
            "{}. {}\n   Evidence: {}\n",
            i + 1,
            table.apply(r),
            table.apply(e)
        ));
    }
    let raw = backend
        .complete(
            &ChatExchange::single(ANALYST_SYSTEM, prompt),
            &GenerationParams::greedy(),
        )
        .map_err(|source| StructuredError::Backend {
            attempts: 0,
            source,
        })?;
    let outcome = json_regen(backend, &raw, retry_limit)?;
    let digest = || kept.evidences.join("\n");
    let Some(obj) = outcome.object().filter(|_| outcome.is_ok()) else {
        return Ok(LogSummary {
            interpretation: raw.trim().to_string(),
            evidence: digest(),
        });
    };
    let field = |k: &str| {
        obj.get(k)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    Ok(LogSummary {
        interpretation: field("interpretation").unwrap_or_else(|| kept.interpretations.join(" ")),
        evidence: field("evidence")
            .map(|e| table.invert(&e))
            .unwrap_or_else(digest),
    })
}
