//! Scoring of predicted analyses and statistics over trajectories.

use std::collections::BTreeMap;

use rca_core::agent::DEFAULT_MAX_STEPS;
use rca_core::llm::{cosine, LlmBackend, LlmError};
use rca_core::tools::{AnalysisResult, BASELINE};
use rca_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

pub const FIELDS: [&str; 3] = ["root_cause", "solution", "evidence"];

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("not computable: {0}")]
    NotComputable(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// `(1 + cos) / 2` between the two embeddings.
pub fn emb_score(
    prediction: &str,
    reference: &str,
    backend: &dyn LlmBackend,
) -> Result<f64, MetricError> {
    let v = backend.embed(&[prediction.to_string(), reference.to_string()])?;
    let c = cosine(&v[0].values, &v[1].values)?;
    Ok(((1.0 + c) / 2.0).clamp(0.0, 1.0))
}

/// Rescales `score` so the baseline answer maps to 0 and a perfect one to 1.
pub fn norm_score<F>(
    score: F,
    prediction: &str,
    reference: &str,
    baseline: &str,
) -> Result<f64, MetricError>
where
    F: Fn(&str, &str) -> Result<f64, MetricError>,
{
    let b = score(baseline, reference)?;
    if b >= 1.0 {
        return Err(MetricError::NotComputable(
            "the baseline already scores 1 against the reference".into(),
        ));
    }
    let p = score(prediction, reference)?;
    Ok((p - b) / (1.0 - b))
}

/// Missing results and blank fields become the baseline answer.
pub fn fill_baseline(result: Option<&AnalysisResult>) -> AnalysisResult {
    result
        .cloned()
        .map_or_else(AnalysisResult::baseline, AnalysisResult::filled)
}

/// Percentage of trajectories that finalized within `max_steps` steps.
pub fn pass_rate_within(trajectories: &[Trajectory], max_steps: usize) -> Result<f64, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::NotComputable("no trajectories".into()));
    }
    let passed = trajectories
        .iter()
        .filter(|t| t.passed && t.steps.len() <= max_steps)
        .count();
    Ok(100.0 * passed as f64 / trajectories.len() as f64)
}

pub fn pass_rate(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    pass_rate_within(trajectories, DEFAULT_MAX_STEPS)
}

fn step_ratio(t: &Trajectory, count: usize) -> f64 {
    if t.steps.is_empty() {
        0.0
    } else {
        count as f64 / t.steps.len() as f64
    }
}

fn macro_average(
    trajectories: &[Trajectory],
    f: impl Fn(&Trajectory) -> f64,
) -> Result<f64, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::NotComputable("no trajectories".into()));
    }
    Ok(100.0 * trajectories.iter().map(f).sum::<f64>() / trajectories.len() as f64)
}

/// Per-trajectory share of invalid actions, averaged over trajectories.
pub fn invalid_rate(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    macro_average(trajectories, |t| step_ratio(t, t.invalid_count()))
}

/// Same averaging for calls intercepted by the error rules or failing at runtime.
pub fn errored_rate(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    macro_average(trajectories, |t| step_ratio(t, t.errored_count()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job_id: String,
    pub trajectory: Trajectory,
    /// Final answer; `None` is scored as the baseline.
    pub prediction: Option<AnalysisResult>,
    pub reference: AnalysisResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScore {
    pub emb: f64,
    /// `None` when the baseline already matches the reference.
    pub norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRow {
    pub job_id: String,
    pub passed: bool,
    pub steps: usize,
    pub invalid_steps: usize,
    pub errored_steps: usize,
    pub responsibility_correct: bool,
    pub scores: BTreeMap<String, FieldScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub emb: f64,
    pub norm: Option<f64>,
    pub norm_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub jobs: usize,
    pub pass_rate: f64,
    pub invalid_rate: f64,
    pub errored_rate: f64,
    pub mean_trajectory_length: f64,
    pub responsibility_accuracy: f64,
    pub fields: BTreeMap<String, FieldSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: ReportSummary,
    pub rows: Vec<JobRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub job_id: String,
    pub field: String,
    pub prediction: String,
    pub reference: String,
}

pub fn evaluate(
    outcomes: &[JobOutcome],
    backend: &dyn LlmBackend,
) -> Result<EvalReport, MetricError> {
    let trajectories: Vec<Trajectory> = outcomes.iter().map(|o| o.trajectory.clone()).collect();
    let score = |p: &str, r: &str| emb_score(p, r, backend);
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let pred = fill_baseline(o.prediction.as_ref());
        let mut scores = BTreeMap::new();
        for (i, name) in FIELDS.iter().enumerate() {
            let p = pred.text_fields()[i].1;
            let r = o.reference.text_fields()[i].1;
            let emb = score(p, r)?;
            let norm = match norm_score(score, p, r, BASELINE) {
                Ok(v) => Some(v),
                Err(MetricError::NotComputable(_)) => None,
                Err(e) => return Err(e),
            };
            scores.insert(name.to_string(), FieldScore { emb, norm });
        }
        rows.push(JobRow {
            job_id: o.job_id.clone(),
            passed: o.trajectory.passed,
            steps: o.trajectory.steps.len(),
            invalid_steps: o.trajectory.invalid_count(),
            errored_steps: o.trajectory.errored_count(),
            responsibility_correct: pred.responsibility == o.reference.responsibility,
            scores,
        });
    }
    let n = rows.len().max(1) as f64;
    let mut fields = BTreeMap::new();
    for name in FIELDS {
        let embs: Vec<f64> = rows.iter().map(|r| r.scores[name].emb).collect();
        let norms: Vec<f64> = rows.iter().filter_map(|r| r.scores[name].norm).collect();
        fields.insert(
            name.to_string(),
            FieldSummary {
                emb: embs.iter().sum::<f64>() / n,
                norm: (!norms.is_empty()).then(|| norms.iter().sum::<f64>() / norms.len() as f64),
                norm_count: norms.len(),
            },
        );
    }
    let summary = ReportSummary {
        jobs: rows.len(),
        pass_rate: pass_rate(&trajectories)?,
        invalid_rate: invalid_rate(&trajectories)?,
        errored_rate: errored_rate(&trajectories)?,
        mean_trajectory_length: rows.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        responsibility_accuracy: 100.0
            * rows.iter().filter(|r| r.responsibility_correct).count() as f64
            / n,
        fields,
    };
    Ok(EvalReport { summary, rows })
}

/// One record per job and text field, for scoring with external metrics.
pub fn prediction_records(outcomes: &[JobOutcome]) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for o in outcomes {
        let pred = fill_baseline(o.prediction.as_ref());
        for (i, name) in FIELDS.iter().enumerate() {
            out.push(PredictionRecord {
                job_id: o.job_id.clone(),
                field: name.to_string(),
                prediction: pred.text_fields()[i].1.to_string(),
                reference: o.reference.text_fields()[i].1.to_string(),
            });
        }
    }
    out
}

pub fn predictions_jsonl(outcomes: &[JobOutcome]) -> String {
    prediction_records(outcomes)
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}
