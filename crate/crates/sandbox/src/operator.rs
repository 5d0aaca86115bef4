//! Scripted stand-in for a language model, driving sandbox runs offline.
//!
//! As controller it reads the rendered history and walks a fixed playbook:
//! the info tool for the level holding the evidence, the log expert on that
//! snapshot, the code expert when a user class is involved, then finalize.
//! A seeded hash of (job, step) corrupts roughly `malformed_rate` of its
//! actions. Once a step is recorded without a valid action it keeps
//! producing broken output for the rest of the run.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rca_consistency::MERGE_SYSTEM;
use rca_core::llm::{LlmError, MockBackend, MockRequest};
use rca_core::structured::{
    parse_direct, SubstitutionTable, TO_JSON_INSTRUCTION, TO_YAML_INSTRUCTION,
};
use rca_core::tools::{AnalysisResult, BASELINE, FINALIZE};
use rca_log_expert::{ANALYST_SYSTEM, LOG_BEGIN, LOG_END, NO_EVIDENCE, SUMMARY_INSTRUCTION};
use serde_json::{json, Value};

use crate::scenario::{JobRecord, ScenarioBundle};
use crate::tools::InfoSource;

pub const DEFAULT_MALFORMED_RATE: f64 = 0.10;
const NO_ACTION: &str = "(no valid action)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig {
    pub malformed_rate: f64,
    pub seed: u64,
    pub use_code_expert: bool,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            malformed_rate: DEFAULT_MALFORMED_RATE,
            seed: 0,
            use_code_expert: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Malformation {
    SingleQuotes,
    TrailingComma,
    MissingBrace,
}

impl Malformation {
    pub fn apply(self, action: &str) -> String {
        match self {
            Self::SingleQuotes => action.replace('"', "'"),
            Self::TrailingComma => format!("{},}}", &action[..action.len() - 1]),
            Self::MissingBrace => action[..action.len() - 1].to_string(),
        }
    }
}

fn fnv(seed: u64, text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Corruption picked for `step` of `job`, if any.
pub fn injected(config: &OperatorConfig, job_id: &str, step: usize) -> Option<Malformation> {
    let h = fnv(config.seed, &format!("{job_id}#{step}"));
    if ((h % 10_000) as f64) >= config.malformed_rate * 10_000.0 {
        return None;
    }
    Some(match (h / 10_000) % 3 {
        0 => Malformation::SingleQuotes,
        1 => Malformation::TrailingComma,
        _ => Malformation::MissingBrace,
    })
}

#[derive(Debug, Clone)]
struct Known {
    job: JobRecord,
    truth: AnalysisResult,
}

/// Shared between every backend it hands out, so repairs recorded by one
/// branch are visible to the others.
#[derive(Clone)]
pub struct SimulatedOperator {
    config: OperatorConfig,
    jobs: Arc<BTreeMap<String, Known>>,
    repairs: Arc<Mutex<HashMap<String, String>>>,
}

impl SimulatedOperator {
    pub fn new(bundle: &ScenarioBundle, config: OperatorConfig) -> Self {
        let jobs = bundle
            .scenarios
            .iter()
            .map(|s| {
                (
                    s.job.job_id.clone(),
                    Known {
                        job: s.job.clone(),
                        truth: s.ground_truth.clone(),
                    },
                )
            })
            .collect();
        Self {
            config,
            jobs: Arc::new(jobs),
            repairs: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn backend(&self) -> MockBackend {
        let op = self.clone();
        MockBackend::with_responder(move |req| op.respond(req))
    }

    pub fn respond(&self, req: &MockRequest) -> Result<String, LlmError> {
        let system = req.exchange.system_prompt.as_str();
        let user = req.exchange.last_user_content().unwrap_or_default();
        Ok(match system {
            TO_YAML_INSTRUCTION => self.repair(user).unwrap_or_else(|| user.to_string()),
            TO_JSON_INSTRUCTION => match parse_direct(user) {
                Some(_) => user.to_string(),
                None => self.repair(user).unwrap_or_else(|| user.to_string()),
            },
            ANALYST_SYSTEM if user.starts_with(SUMMARY_INSTRUCTION) => summarize_findings(user),
            ANALYST_SYSTEM => self.analyze_chunk(user),
            rca_code_expert::SYSTEM if user.starts_with(rca_code_expert::ANALYZE_INSTRUCTION) => analyze_class(user),
            rca_code_expert::SYSTEM => {
                "The user function dereferences a lookup result that can be null for records missing a field.".into()
            }
            MERGE_SYSTEM => user
                .lines()
                .find_map(|l| l.strip_prefix("Candidate 1: "))
                .unwrap_or(BASELINE)
                .to_string(),
            _ => self.act(user),
        })
    }

    fn repair(&self, text: &str) -> Option<String> {
        let repairs = self.repairs.lock().expect("repair table lock");
        repairs
            .iter()
            .filter(|(bad, _)| text.contains(bad.as_str()))
            .max_by_key(|(bad, _)| bad.len())
            .map(|(_, good)| good.clone())
    }

    fn analyze_chunk(&self, prompt: &str) -> String {
        let chunk = prompt
            .rfind(LOG_BEGIN)
            .map(|i| &prompt[i + LOG_BEGIN.len()..])
            .and_then(|rest| rest.find(LOG_END).map(|j| &rest[..j]))
            .map(|c| SubstitutionTable::default().invert(c))
            .unwrap_or_default();
        let mut interpretations = Vec::new();
        let mut evidences = Vec::new();
        for k in self.jobs.values() {
            if chunk.contains(&k.truth.evidence) {
                interpretations.push(k.truth.root_cause.clone());
                evidences.push(k.truth.evidence.clone());
            }
        }
        json!({"interpretations": interpretations, "evidences": evidences}).to_string()
    }

    fn act(&self, history: &str) -> String {
        let step = history.matches("\nFunction: ").count();
        let Some(known) = job_in_task(history).and_then(|id| self.jobs.get(id)) else {
            return finalize_line(&AnalysisResult::baseline(), "The task names no job I know.");
        };
        let job_id = known.job.job_id.as_str();
        let called = called_functions(history);
        let has = |name: &str| called.iter().any(|c| c == name);
        let info = InfoSource::Log(known.job.evidence_level).tool_name();
        let (thought, action) = if !has(info) {
            (
                format!("Start with the {info} of {job_id}."),
                json!({"function": info, "kwargs": {"job_id": job_id}}),
            )
        } else if !has(rca_log_expert::TOOL_NAME) {
            let key = last_snapshot_key(history).unwrap_or_default();
            (
                "The log is long; hand it to the log expert.".to_string(),
                json!({"function": rca_log_expert::TOOL_NAME, "kwargs": {"snapshot": key}}),
            )
        } else if let Some(class) = known
            .job
            .class_name
            .as_deref()
            .filter(|_| self.config.use_code_expert && !has(rca_code_expert::TOOL_NAME))
        {
            (
                format!("The failure points at user code in {class}."),
                json!({"function": rca_code_expert::TOOL_NAME, "kwargs": {"class_name": class}}),
            )
        } else {
            let result = if log_expert_found_nothing(history) {
                AnalysisResult::baseline()
            } else {
                known.truth.clone()
            };
            return self.emit(
                job_id,
                step,
                "I can explain the anomaly now.",
                finalize_value(&result),
                history,
            );
        };
        self.emit(job_id, step, &thought, action, history)
    }

    fn emit(
        &self,
        job_id: &str,
        step: usize,
        thought: &str,
        action: Value,
        history: &str,
    ) -> String {
        let good = action.to_string();
        let broken_history = history.contains(&format!("\nFunction: {NO_ACTION}"));
        let form = if broken_history {
            Some(injected(&self.config, job_id, step).unwrap_or(Malformation::SingleQuotes))
        } else {
            injected(&self.config, job_id, step)
        };
        let text = match form {
            Some(m) => {
                let bad = m.apply(&good);
                self.repairs
                    .lock()
                    .expect("repair table lock")
                    .insert(bad.clone(), good);
                bad
            }
            None => good,
        };
        format!("Thought: {thought}\nFunction: {text}")
    }
}

fn finalize_value(r: &AnalysisResult) -> Value {
    json!({"function": FINALIZE, "kwargs": {
        "root_cause": r.root_cause,
        "solution": r.solution,
        "evidence": r.evidence,
        "responsibility": r.responsibility.as_str(),
    }})
}

fn finalize_line(r: &AnalysisResult, thought: &str) -> String {
    format!("Thought: {thought}\nFunction: {}", finalize_value(r))
}

fn job_in_task(history: &str) -> Option<&str> {
    let task = history.strip_prefix("Task: ")?.lines().next()?;
    task.match_indices("job-").find_map(|(i, _)| {
        let id = task.get(i..i + 12)?;
        id[4..].chars().all(|c| c.is_ascii_hexdigit()).then_some(id)
    })
}

fn called_functions(history: &str) -> Vec<String> {
    history
        .split("\nFunction: ")
        .skip(1)
        .filter_map(|seg| {
            let line = seg.lines().next()?;
            let v: Value = serde_json::from_str(line).ok()?;
            v.get("function")?.as_str().map(str::to_string)
        })
        .collect()
}

fn last_snapshot_key(history: &str) -> Option<String> {
    let i = history.rfind("[ snapshot: ")?;
    let rest = &history[i + "[ snapshot: ".len()..];
    rest.find(" ]").map(|j| rest[..j].to_string())
}

fn log_expert_found_nothing(history: &str) -> bool {
    history
        .split("\nFunction: ")
        .skip(1)
        .filter(|seg| {
            seg.starts_with(&format!(
                "{{\"function\": \"{}\"",
                rca_log_expert::TOOL_NAME
            ))
        })
        .any(|seg| seg.contains(NO_EVIDENCE))
}

fn summarize_findings(prompt: &str) -> String {
    let mut interpretation = None;
    let mut evidence = None;
    for line in prompt.lines() {
        let t = line.trim();
        if let Some(e) = t.strip_prefix("Evidence: ") {
            evidence.get_or_insert_with(|| e.to_string());
        } else if let Some((n, rest)) = t.split_once(". ") {
            if interpretation.is_none() && !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) {
                interpretation = Some(rest.to_string());
            }
        }
    }
    json!({"interpretation": interpretation.unwrap_or_default(), "evidence": evidence.unwrap_or_default()}).to_string()
}

fn analyze_class(prompt: &str) -> String {
    let class = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Class: "))
        .unwrap_or_default()
        .trim();
    let (analysis, suggestions): (String, Vec<&str>) = match class {
        "LookupTable" => ("lookup returns null for keys that are absent from the table.".into(), vec!["java.util.HashMap"]),
        "Event" => ("Plain record; attributes may lack the region entry.".into(), vec![]),
        c => (
            format!("{c}.map passes a possibly missing region to LookupTable.lookup and dereferences the result."),
            vec!["LookupTable", "Event"],
        ),
    };
    json!({"analysis": analysis, "suggestions": suggestions}).to_string()
}
