use rca_core::llm::{ChatExchange, GenerationParams, LlmBackend, LlmError};
use rca_core::tools::{AnalysisResult, Responsibility};
use serde::{Deserialize, Serialize};

pub const MERGE_SYSTEM: &str =
    "You merge several candidate answers to the same question into one answer.";

pub const MERGE_INSTRUCTION: &str = "\
Below are candidate answers to the same question. Write one answer that keeps what most candidates agree on. \
Match the form and length of a typical candidate. Reply with the answer text only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    EmbeddingVote,
    LlmAggregate,
}

/// Index of the text closest to the mean embedding. Ties go to the lowest index.
pub fn vote_with_embedding(texts: &[String], backend: &dyn LlmBackend) -> Result<usize, LlmError> {
    if texts.is_empty() {
        return Err(LlmError::Precondition(
            "at least one candidate is required".into(),
        ));
    }
    if texts.len() == 1 {
        return Ok(0);
    }
    let vectors: Vec<Vec<f64>> = backend
        .embed(texts)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let dim = vectors[0].len();
    let mut mean = vec![0.0; dim];
    for v in &vectors {
        if v.len() != dim {
            return Err(LlmError::Protocol("embedding dimensions differ".into()));
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let k = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, v) in vectors.iter().enumerate() {
        let sim = rca_core::llm::cosine(v, &mean)?;
        if sim > best_sim + 1e-12 {
            best = i;
            best_sim = sim;
        }
    }
    Ok(best)
}

/// Drops enumeration markup a model tends to copy from the merge prompt.
pub fn strip_enumeration(text: &str) -> String {
    let mut t = text.trim();
    loop {
        let before = t;
        for prefix in ["Merged answer:", "Answer:", "Final answer:"] {
            if t.len() >= prefix.len() && t[..prefix.len()].eq_ignore_ascii_case(prefix) {
                t = t[prefix.len()..].trim_start();
            }
        }
        if let Some(rest) = t
            .strip_prefix("Candidate ")
            .or_else(|| t.strip_prefix("Answer "))
        {
            let digits = rest.chars().take_while(char::is_ascii_digit).count();
            if digits > 0 && rest[digits..].starts_with(':') {
                t = rest[digits + 1..].trim_start();
            }
        }
        let digits = t.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 && (t[digits..].starts_with(". ") || t[digits..].starts_with(") ")) {
            t = t[digits + 2..].trim_start();
        }
        if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
            t = rest.trim_start();
        }
        if t == before {
            break;
        }
    }
    t.to_string()
}

/// One merge call over all candidates. A backend failure or an empty reply
/// falls back to the embedding vote. The flag reports the fallback.
pub fn aggregate_with_llm(
    texts: &[String],
    backend: &dyn LlmBackend,
) -> Result<(String, bool), LlmError> {
    if texts.is_empty() {
        return Err(LlmError::Precondition(
            "at least one candidate is required".into(),
        ));
    }
    let mut prompt = format!("{MERGE_INSTRUCTION}\n");
    for (i, t) in texts.iter().enumerate() {
        prompt.push_str(&format!("\nCandidate {}: {}", i + 1, t));
    }
    match backend.complete(
        &ChatExchange::single(MERGE_SYSTEM, prompt),
        &GenerationParams::greedy(),
    ) {
        Ok(reply) => {
            let merged = strip_enumeration(&reply);
            if !merged.is_empty() {
                return Ok((merged, false));
            }
            log::warn!("empty merge reply; using the embedding vote");
        }
        Err(e) => log::warn!("merge call failed ({e}); using the embedding vote"),
    }
    let i = vote_with_embedding(texts, backend)?;
    Ok((texts[i].clone(), true))
}

/// Most frequent label; any tie for the top count gives `Unclear`.
pub fn majority_responsibility(labels: &[Responsibility]) -> Responsibility {
    let count = |r: Responsibility| labels.iter().filter(|&&l| l == r).count();
    let mut counts = [
        (Responsibility::User, count(Responsibility::User)),
        (Responsibility::Platform, count(Responsibility::Platform)),
        (Responsibility::Unclear, count(Responsibility::Unclear)),
    ];
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    if counts[0].1 == 0 || counts[0].1 == counts[1].1 {
        Responsibility::Unclear
    } else {
        counts[0].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationOutcome {
    pub result: AnalysisResult,
    pub method: Aggregation,
    pub candidate_count: usize,
    /// Candidate chosen for the root cause; set by the embedding vote only.
    pub chosen_index: Option<usize>,
    /// Candidate chosen per text field, in root_cause, solution, evidence order.
    pub field_indices: Option<[usize; 3]>,
    /// Fields where the merge call fell back to the vote.
    pub fallbacks: usize,
}

/// Aggregates each text field independently and the responsibility by majority.
pub fn aggregate_results(
    results: &[AnalysisResult],
    method: Aggregation,
    backend: &dyn LlmBackend,
) -> Result<AggregationOutcome, LlmError> {
    if results.is_empty() {
        return Err(LlmError::Precondition("no candidates to aggregate".into()));
    }
    let results: Vec<AnalysisResult> = results
        .iter()
        .cloned()
        .map(AnalysisResult::filled)
        .collect();
    let field = |i: usize| -> Vec<String> {
        results
            .iter()
            .map(|r| r.text_fields()[i].1.to_string())
            .collect()
    };
    let mut texts: [String; 3] = Default::default();
    let mut indices = [0usize; 3];
    let mut fallbacks = 0;
    for f in 0..3 {
        let candidates = field(f);
        match method {
            Aggregation::EmbeddingVote => {
                indices[f] = vote_with_embedding(&candidates, backend)?;
                texts[f] = candidates[indices[f]].clone();
            }
            Aggregation::LlmAggregate => {
                let (t, fell_back) = aggregate_with_llm(&candidates, backend)?;
                fallbacks += usize::from(fell_back);
                texts[f] = t;
            }
        }
    }
    let [root_cause, solution, evidence] = texts;
    let responsibility =
        majority_responsibility(&results.iter().map(|r| r.responsibility).collect::<Vec<_>>());
    let voted = method == Aggregation::EmbeddingVote;
    Ok(AggregationOutcome {
        result: AnalysisResult {
            root_cause,
            solution,
            evidence,
            responsibility,
        },
        method,
        candidate_count: results.len(),
        chosen_index: voted.then_some(indices[0]),
        field_indices: voted.then_some(indices),
        fallbacks,
    })
}
