//! Trajectory files: one JSON object per step followed by a result object.
//!
//! Each step line carries two digests. `prompt_sha256` covers the controller
//! prompt that produced the step and `step_sha256` chains the step content onto
//! the previous digest, so an edit anywhere is reported at the first step it touches.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::assemble_with_system;
use crate::tools::{AnalysisResult, ToolCall};
use crate::trajectory::{Step, Trajectory};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(rename = "type")]
    pub kind: String,
    pub index: usize,
    pub prompt_sha256: String,
    pub step_sha256: String,
    pub thought: String,
    pub action: Option<ToolCall>,
    pub observation: String,
    pub error_flag: bool,
    pub invalid_flag: bool,
}

impl StepRecord {
    pub fn step(&self) -> Step {
        Step {
            thought: self.thought.clone(),
            action: self.action.clone(),
            observation: self.observation.clone(),
            error_flag: self.error_flag,
            invalid_flag: self.invalid_flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrailer {
    #[serde(rename = "type")]
    pub kind: String,
    pub task: String,
    pub system_prompt: String,
    pub passed: bool,
    pub result: Option<AnalysisResult>,
    pub seed_prefix_len: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub steps: Vec<StepRecord>,
    pub trailer: TrajectoryTrailer,
}

impl TrajectoryFile {
    pub fn build(system_prompt: &str, trajectory: &Trajectory) -> Self {
        let mut steps = Vec::with_capacity(trajectory.steps.len());
        let mut prev = String::new();
        for (index, step) in trajectory.steps.iter().enumerate() {
            let prompt_sha256 = prompt_digest(system_prompt, trajectory, index);
            let step_sha256 = step_digest(&prev, step);
            prev = step_sha256.clone();
            steps.push(StepRecord {
                kind: "step".into(),
                index,
                prompt_sha256,
                step_sha256,
                thought: step.thought.clone(),
                action: step.action.clone(),
                observation: step.observation.clone(),
                error_flag: step.error_flag,
                invalid_flag: step.invalid_flag,
            });
        }
        let trailer = TrajectoryTrailer {
            kind: "result".into(),
            task: trajectory.task.clone(),
            system_prompt: system_prompt.to_string(),
            passed: trajectory.passed,
            result: trajectory.result.clone(),
            seed_prefix_len: trajectory.seed_prefix_len,
            diagnostic: trajectory.diagnostic.clone(),
        };
        Self { steps, trailer }
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            task: self.trailer.task.clone(),
            steps: self.steps.iter().map(StepRecord::step).collect(),
            result: self.trailer.result.clone(),
            passed: self.trailer.passed,
            seed_prefix_len: self.trailer.seed_prefix_len,
            diagnostic: self.trailer.diagnostic.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.trailer).expect("trailer serializes"));
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self, PersistError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader(reader: impl io::Read) -> Result<Self, PersistError> {
        let mut steps = Vec::new();
        let mut trailer = None;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if trailer.is_some() {
                return Err(PersistError::Format {
                    line: lineno,
                    message: "content after the result object".into(),
                });
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| PersistError::Format {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let kind = value
                .get("type")
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string();
            let bad = |e: serde_json::Error| PersistError::Format {
                line: lineno,
                message: e.to_string(),
            };
            match kind.as_str() {
                "step" => steps.push(serde_json::from_value::<StepRecord>(value).map_err(bad)?),
                "result" => {
                    trailer = Some(serde_json::from_value::<TrajectoryTrailer>(value).map_err(bad)?)
                }
                other => {
                    return Err(PersistError::Format {
                        line: lineno,
                        message: format!("unknown record type {other:?}"),
                    })
                }
            }
        }
        let trailer = trailer.ok_or(PersistError::Format {
            line: steps.len() + 1,
            message: "missing result object".into(),
        })?;
        Ok(Self { steps, trailer })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the controller prompt sent before step `index`.
pub fn prompt_digest(system_prompt: &str, trajectory: &Trajectory, index: usize) -> String {
    let mut prefix = Trajectory::new(trajectory.task.clone());
    prefix.steps = trajectory.steps[..index.min(trajectory.steps.len())].to_vec();
    let exchange = assemble_with_system(system_prompt, &prefix);
    let mut h = Sha256::new();
    h.update(exchange.system_prompt.as_bytes());
    for m in &exchange.messages {
        h.update([0u8]);
        h.update(m.content.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn step_digest(previous: &str, step: &Step) -> String {
    let body = serde_json::to_string(step).expect("steps serialize");
    sha256_hex(format!("{previous}\n{body}").as_bytes())
}

pub fn write_trajectory(
    path: &Path,
    system_prompt: &str,
    trajectory: &Trajectory,
) -> Result<(), PersistError> {
    let file = TrajectoryFile::build(system_prompt, trajectory);
    let mut f = fs::File::create(path)?;
    f.write_all(file.to_jsonl().as_bytes())?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile, PersistError> {
    TrajectoryFile::from_reader(fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub steps_checked: usize,
    /// First step whose recorded digests disagree with the recomputed ones.
    pub diverged_at: Option<usize>,
    pub detail: Option<String>,
}

impl ReplayReport {
    pub fn is_consistent(&self) -> bool {
        self.diverged_at.is_none()
    }
}

/// Recomputes every digest from the recorded content and reports the first mismatch.
pub fn replay(file: &TrajectoryFile) -> ReplayReport {
    let trajectory = file.trajectory();
    let mut prev = String::new();
    for (i, record) in file.steps.iter().enumerate() {
        if record.index != i {
            return diverged(
                i,
                format!("step {i} is recorded with index {}", record.index),
            );
        }
        if prompt_digest(&file.trailer.system_prompt, &trajectory, i) != record.prompt_sha256 {
            return diverged(i, format!("step {i}: prompt digest mismatch"));
        }
        let digest = step_digest(&prev, &trajectory.steps[i]);
        if digest != record.step_sha256 {
            return diverged(i, format!("step {i}: step content digest mismatch"));
        }
        prev = digest;
    }
    ReplayReport {
        steps_checked: file.steps.len(),
        diverged_at: None,
        detail: None,
    }
}

fn diverged(i: usize, detail: String) -> ReplayReport {
    ReplayReport {
        steps_checked: i + 1,
        diverged_at: Some(i),
        detail: Some(detail),
    }
}
