//! On-disk bundle layout:
//!
//! ```text
//! manifest.json
//! knowledge.jsonl
//! src/<package path>/<Class>.java
//! jobs/<job id>/job.json
//! jobs/<job id>/ground_truth.json
//! jobs/<job id>/advisor.jsonl
//! jobs/<job id>/logs/{platform,runtime,infrastructure}.jsonl
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rca_core::tools::AnalysisResult;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::scenario::{
    AdvisorRecord, JobRecord, KnowledgeRecord, LogEntry, LogLevel, Scenario, ScenarioBundle,
    SourceFile,
};

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub jobs: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), BundleError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("bundle records serialize") + "\n"
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("bundle records serialize") + "\n")
        .collect()
}

pub fn job_dir(root: &Path, job_id: &str) -> PathBuf {
    root.join("jobs").join(job_id)
}

pub fn write_bundle(bundle: &ScenarioBundle, root: &Path) -> Result<(), BundleError> {
    let manifest = Manifest {
        seed: bundle.seed,
        jobs: bundle
            .scenarios
            .iter()
            .map(|s| s.job.job_id.clone())
            .collect(),
    };
    write(&root.join("manifest.json"), &json(&manifest))?;
    write(&root.join("knowledge.jsonl"), &jsonl(&bundle.knowledge))?;
    for f in &bundle.sources {
        write(&root.join("src").join(&f.path), &f.content)?;
    }
    for s in &bundle.scenarios {
        let dir = job_dir(root, &s.job.job_id);
        write(&dir.join("job.json"), &json(&s.job))?;
        write(&dir.join("ground_truth.json"), &json(&s.ground_truth))?;
        write(&dir.join("advisor.jsonl"), &jsonl(&s.advisor))?;
        for level in LogLevel::ALL {
            let entries: Vec<&LogEntry> = s.logs.iter().filter(|e| e.level == level).collect();
            write(
                &dir.join("logs").join(format!("{}.jsonl", level.as_str())),
                &jsonl(&entries),
            )?;
        }
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| BundleError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, BundleError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| BundleError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn load_scenario(root: &Path, job_id: &str) -> Result<Scenario, BundleError> {
    let dir = job_dir(root, job_id);
    let job: JobRecord = read_json(&dir.join("job.json"))?;
    let ground_truth: AnalysisResult = read_json(&dir.join("ground_truth.json"))?;
    let advisor: Vec<AdvisorRecord> = read_jsonl(&dir.join("advisor.jsonl"))?;
    let mut logs: Vec<LogEntry> = Vec::new();
    for level in LogLevel::ALL {
        let path = dir.join("logs").join(format!("{}.jsonl", level.as_str()));
        if path.exists() {
            logs.extend(read_jsonl::<LogEntry>(&path)?);
        }
    }
    logs.sort_by_key(|a| (a.timestamp, a.level));
    Ok(Scenario {
        job,
        ground_truth,
        logs,
        advisor,
    })
}

pub fn load_bundle(root: &Path) -> Result<ScenarioBundle, BundleError> {
    let manifest: Manifest = read_json(&root.join("manifest.json"))?;
    let scenarios = manifest
        .jobs
        .iter()
        .map(|id| load_scenario(root, id))
        .collect::<Result<_, _>>()?;
    let knowledge_path = root.join("knowledge.jsonl");
    let knowledge: Vec<KnowledgeRecord> = if knowledge_path.exists() {
        read_jsonl(&knowledge_path)?
    } else {
        Vec::new()
    };
    let mut sources = Vec::new();
    let src = root.join("src");
    if src.is_dir() {
        for entry in WalkDir::new(&src).sort_by_file_name() {
            let entry = entry.map_err(|e| BundleError::Io {
                path: src.clone(),
                source: e.into(),
            })?;
            if entry.file_type().is_file() {
                let rel = entry
                    .path()
                    .strip_prefix(&src)
                    .expect("walk stays under root");
                let content = fs::read_to_string(entry.path()).map_err(io_err(entry.path()))?;
                sources.push(SourceFile {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    content,
                });
            }
        }
    }
    Ok(ScenarioBundle {
        seed: manifest.seed,
        scenarios,
        sources,
        knowledge,
    })
}
