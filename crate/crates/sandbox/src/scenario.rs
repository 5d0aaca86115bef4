use std::collections::HashSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rca_core::tools::{AnalysisResult, Responsibility};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    Platform,
    Runtime,
    Infrastructure,
}

impl LogLevel {
    pub const ALL: [LogLevel; 3] = [
        LogLevel::Platform,
        LogLevel::Runtime,
        LogLevel::Infrastructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Platform => "platform",
            Self::Runtime => "runtime",
            Self::Infrastructure => "infrastructure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub job_id: String,
    pub level: LogLevel,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

impl LogEntry {
    pub fn render(&self) -> String {
        format!(
            "{} {}",
            self.timestamp
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.text
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisorRecord {
    pub job_id: String,
    pub timestamp: DateTime<Utc>,
    pub advice: String,
}

impl AdvisorRecord {
    pub fn render(&self) -> String {
        format!(
            "{} {}",
            self.timestamp
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.advice
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub scenario_id: String,
    pub detection_time: DateTime<Utc>,
    /// Level whose logs carry the evidence line.
    pub evidence_level: LogLevel,
    /// User class involved, for scenarios rooted in job code.
    pub class_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub job: JobRecord,
    pub ground_truth: AnalysisResult,
    pub logs: Vec<LogEntry>,
    pub advisor: Vec<AdvisorRecord>,
}

impl Scenario {
    pub fn task(&self) -> String {
        task_statement(&self.job)
    }
}

pub fn task_statement(job: &JobRecord) -> String {
    format!(
        "Job {} reported an anomaly detected at {}. Find its root cause, a solution, supporting evidence and the responsible party.",
        job.job_id,
        job.detection_time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub example: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioBundle {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    pub sources: Vec<SourceFile>,
    pub knowledge: Vec<KnowledgeRecord>,
}

impl ScenarioBundle {
    pub fn scenario(&self, job_id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.job.job_id == job_id)
    }
}

/// Values a template fills in.
struct Ctx<'a> {
    job: &'a str,
    rng: &'a mut ChaCha8Rng,
}

struct Instance {
    scenario_id: &'static str,
    responsibility: Responsibility,
    /// Signal lines; the first is the evidence line.
    signal: Vec<(LogLevel, String)>,
    evidence_level: LogLevel,
    evidence: String,
    root_cause: String,
    solution: String,
    class_name: Option<String>,
}

const OPERATORS: &[&str] = &[
    "WindowAggregate",
    "SessionJoin",
    "DedupFilter",
    "EnrichLookup",
    "TopNRank",
];
const HOSTS: &[&str] = &[
    "node-a17", "node-b03", "node-c22", "node-d09", "node-e41", "node-f12",
];
const QUEUES: &[&str] = &[
    "realtime-high",
    "batch-default",
    "analytics",
    "ads-critical",
];
const UDF_CLASSES: &[&str] = &["EnrichFunction", "SessionAggregator", "OrderParser"];

type Template = fn(&mut Ctx<'_>) -> Instance;

fn oom_config(c: &mut Ctx<'_>) -> Instance {
    let op = *OPERATORS.choose(c.rng).unwrap();
    let mem = [1024, 1536, 2048, 3072].choose(c.rng).copied().unwrap();
    let sub = c.rng.gen_range(1..8);
    let evidence =
        format!("Task {op} ({sub}/8) failed: java.lang.OutOfMemoryError: Java heap space");
    Instance {
        scenario_id: "oom-config",
        responsibility: Responsibility::User,
        signal: vec![
            (LogLevel::Runtime, format!("ERROR TaskExecutor - {evidence}")),
            (LogLevel::Platform, format!("WARN Container of job {} used {mem} MB of {mem} MB heap before failure", c.job)),
        ],
        evidence_level: LogLevel::Runtime,
        evidence,
        root_cause: format!("The {op} operator ran out of heap: the job is configured with only {mem} MB TaskManager memory, too little for its state."),
        solution: format!("Raise taskmanager.memory.process.size well above {mem} MB or reduce the state held by {op}."),
        class_name: None,
    }
}

fn udf_npe(c: &mut Ctx<'_>) -> Instance {
    let class = *UDF_CLASSES.choose(c.rng).unwrap();
    let line = c.rng.gen_range(20..90);
    let evidence =
        format!("java.lang.NullPointerException at com.acme.etl.{class}.map({class}.java:{line})");
    Instance {
        scenario_id: "udf-npe",
        responsibility: Responsibility::User,
        signal: vec![
            (LogLevel::Runtime, format!("ERROR Task failed with {evidence}")),
            (LogLevel::Platform, format!("WARN Job {} restarting after user function exception", c.job)),
        ],
        evidence_level: LogLevel::Runtime,
        evidence,
        root_cause: format!("{class}.map reads a field that is null for some records, so the user function throws NullPointerException at line {line}."),
        solution: format!("Guard the nullable field in {class}.map and send malformed records to a side output instead of failing."),
        class_name: Some(class.to_string()),
    }
}

fn checkpoint_disabled(c: &mut Ctx<'_>) -> Instance {
    let failures = c.rng.gen_range(2..6);
    let evidence = format!(
        "Checkpointing is disabled for job {}; no restart strategy configured",
        c.job
    );
    Instance {
        scenario_id: "checkpoint-disabled",
        responsibility: Responsibility::User,
        signal: vec![
            (LogLevel::Runtime, format!("WARN {evidence}")),
            (LogLevel::Runtime, format!("ERROR Job {} switched to FAILED after {failures} source read errors", c.job)),
        ],
        evidence_level: LogLevel::Runtime,
        evidence,
        root_cause: format!("With checkpointing off and no restart strategy, {failures} transient source read errors left the job nothing to recover from, so it failed."),
        solution: "Turn on periodic checkpointing and configure a fixed-delay restart strategy for the job.".into(),
        class_name: None,
    }
}

fn sink_timeout(c: &mut Ctx<'_>) -> Instance {
    let host = *HOSTS.choose(c.rng).unwrap();
    let ms = [10_000, 30_000, 60_000].choose(c.rng).copied().unwrap();
    let evidence = format!("Bulk request to es-{host}:9200 failed: java.net.SocketTimeoutException: Read timed out after {ms} ms");
    Instance {
        scenario_id: "sink-timeout",
        responsibility: Responsibility::User,
        signal: vec![
            (LogLevel::Runtime, format!("ERROR ElasticsearchSinkWriter - {evidence}")),
            (LogLevel::Runtime, "at org.elasticsearch.client.RestClient.performRequest(RestClient.java:283)".into()),
        ],
        evidence_level: LogLevel::Runtime,
        evidence,
        root_cause: format!("The downstream Elasticsearch cluster at es-{host} did not answer bulk writes within {ms} ms, failing the sink."),
        solution: "Scale or tune the user's Elasticsearch cluster and raise the sink's socket timeout and bulk retry settings.".into(),
        class_name: None,
    }
}

fn eviction(c: &mut Ctx<'_>) -> Instance {
    let queue = *QUEUES.choose(c.rng).unwrap();
    let n = c.rng.gen_range(2..9);
    let evidence = format!(
        "Job {} preempted: {n} containers reclaimed for higher-priority workload in queue {queue}",
        c.job
    );
    Instance {
        scenario_id: "eviction",
        responsibility: Responsibility::Platform,
        signal: vec![
            (LogLevel::Platform, format!("WARN {evidence}")),
            (LogLevel::Runtime, format!("WARN Lost {n} TaskManagers, job {} restarting", c.job)),
        ],
        evidence_level: LogLevel::Platform,
        evidence,
        root_cause: format!("The scheduler evicted {n} of the job's containers in queue {queue} to make room for higher-priority work."),
        solution: format!("Platform operators should revisit preemption for queue {queue}; the job recovers once capacity is returned."),
        class_name: None,
    }
}

fn disk_failure(c: &mut Ctx<'_>) -> Instance {
    let host = *HOSTS.choose(c.rng).unwrap();
    let dev = ["sdb", "sdc", "nvme1n1"].choose(c.rng).copied().unwrap();
    let evidence = format!("Disk failure detected on {host}: I/O error on /dev/{dev}");
    Instance {
        scenario_id: "disk-failure",
        responsibility: Responsibility::Platform,
        signal: vec![
            (LogLevel::Infrastructure, format!("ERROR {evidence}")),
            (LogLevel::Runtime, format!("WARN TaskManager on {host} lost heartbeat")),
        ],
        evidence_level: LogLevel::Infrastructure,
        evidence,
        root_cause: format!("A disk on {host} (/dev/{dev}) failed and took down the TaskManager hosting part of the job."),
        solution: format!("Take {host} out of service, replace /dev/{dev}, and reschedule the job's slots on healthy nodes."),
        class_name: None,
    }
}

fn network_partition(c: &mut Ctx<'_>) -> Instance {
    let host = *HOSTS.choose(c.rng).unwrap();
    let secs = c.rng.gen_range(30..300);
    let evidence = format!("Network partition: {host} unreachable from JobManager for {secs} s");
    Instance {
        scenario_id: "network-partition",
        responsibility: Responsibility::Platform,
        signal: vec![
            (LogLevel::Infrastructure, format!("ERROR {evidence}")),
            (LogLevel::Platform, format!("WARN Slots on {host} marked unavailable")),
        ],
        evidence_level: LogLevel::Infrastructure,
        evidence,
        root_cause: format!("{host} lost network connectivity to the JobManager for {secs} seconds, so its tasks were cancelled."),
        solution: format!("Repair the network link of {host}; platform operators should check the top-of-rack switch."),
        class_name: None,
    }
}

fn metadata_service(c: &mut Ctx<'_>) -> Instance {
    let code = [500, 502, 503].choose(c.rng).copied().unwrap();
    let evidence = format!(
        "Metadata service returned HTTP {code} while registering job {}",
        c.job
    );
    Instance {
        scenario_id: "metadata-service",
        responsibility: Responsibility::Platform,
        signal: vec![
            (LogLevel::Platform, format!("ERROR {evidence}")),
            (LogLevel::Platform, format!("WARN Submission of job {} retried 3 times", c.job)),
        ],
        evidence_level: LogLevel::Platform,
        evidence,
        root_cause: format!("The platform's metadata service failed with HTTP {code}, so the job could not be registered and stopped."),
        solution: "Platform operators should restore the metadata service; resubmit the job afterwards.".into(),
        class_name: None,
    }
}

const USER_TEMPLATES: &[Template] = &[oom_config, udf_npe, checkpoint_disabled, sink_timeout];
const PLATFORM_TEMPLATES: &[Template] =
    &[eviction, disk_failure, network_partition, metadata_service];

fn noise_line(level: LogLevel, job: &str, rng: &mut ChaCha8Rng) -> String {
    let host = HOSTS.choose(rng).unwrap();
    match level {
        LogLevel::Runtime => match rng.gen_range(0..4) {
            0 => format!(
                "INFO Checkpoint {} of job {job} completed in {} ms",
                rng.gen_range(1..900),
                rng.gen_range(80..900)
            ),
            1 => format!(
                "INFO Source kafka-orders committed offset {} for partition {}",
                rng.gen_range(1_000..900_000),
                rng.gen_range(0..16)
            ),
            2 => format!("INFO Sink flushed {} records", rng.gen_range(10..5000)),
            _ => format!(
                "DEBUG Watermark advanced to {}",
                rng.gen_range(1_700_000_000..1_800_000_000u64)
            ),
        },
        LogLevel::Platform => match rng.gen_range(0..3) {
            0 => format!("INFO Heartbeat from TaskManager on {host} received"),
            1 => format!("INFO Slot request for job {job} fulfilled on {host}"),
            _ => format!(
                "INFO Job {job} metrics reported: {} records/s",
                rng.gen_range(100..20_000)
            ),
        },
        LogLevel::Infrastructure => match rng.gen_range(0..3) {
            0 => format!("INFO Node {host} CPU usage {}%", rng.gen_range(5..95)),
            1 => format!("INFO Disk usage on {host} {}%", rng.gen_range(10..85)),
            _ => format!("INFO NTP offset on {host} {} ms", rng.gen_range(0..20)),
        },
    }
}

fn job_id(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let id = format!("job-{:08x}", rng.gen::<u32>());
        if used.insert(id.clone()) {
            return id;
        }
    }
}

fn scenario(index: usize, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> Scenario {
    let job = job_id(rng, used);
    let start = Utc.with_ymd_and_hms(2024, 5, 1, 0, 0, 0).unwrap();
    let detection = start
        + Duration::minutes(rng.gen_range(0..60 * 24 * 30))
        + Duration::seconds(rng.gen_range(0..60));
    let templates = if index.is_multiple_of(2) {
        USER_TEMPLATES
    } else {
        PLATFORM_TEMPLATES
    };
    let template = templates[rng.gen_range(0..templates.len())];
    let inst = template(&mut Ctx { job: &job, rng });

    let mut logs = Vec::new();
    // noise spans an hour before detection and fifteen minutes after it
    for level in LogLevel::ALL {
        let count = rng.gen_range(15..40);
        for _ in 0..count {
            let offset = rng.gen_range(-3600..900);
            logs.push(LogEntry {
                job_id: job.clone(),
                level,
                timestamp: detection + Duration::seconds(offset),
                text: noise_line(level, &job, rng),
            });
        }
    }
    let signal_start = rng.gen_range(60..600);
    for (k, (level, text)) in inst.signal.iter().enumerate() {
        logs.push(LogEntry {
            job_id: job.clone(),
            level: *level,
            timestamp: detection - Duration::seconds(signal_start - 5 * k as i64),
            text: text.clone(),
        });
    }
    for level in LogLevel::ALL {
        logs.push(LogEntry {
            job_id: job.clone(),
            level,
            timestamp: detection + Duration::seconds(rng.gen_range(0..600)),
            text: format!("INFO Recovery of job {job} started by the operations team"),
        });
    }
    logs.sort_by_key(|a| (a.timestamp, a.level));

    let mut advisor = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        advisor.push(AdvisorRecord {
            job_id: job.clone(),
            timestamp: detection - Duration::hours(rng.gen_range(1..72)),
            advice: format!(
                "Advisor: consider raising parallelism of job {job} to {}",
                rng.gen_range(2..64)
            ),
        });
    }
    advisor.push(AdvisorRecord {
        job_id: job.clone(),
        timestamp: detection + Duration::minutes(rng.gen_range(1..30)),
        advice: format!(
            "Advisor: post-incident review opened for {}",
            inst.scenario_id
        ),
    });
    advisor.sort_by_key(|a| a.timestamp);

    Scenario {
        job: JobRecord {
            job_id: job,
            scenario_id: inst.scenario_id.to_string(),
            detection_time: detection,
            evidence_level: inst.evidence_level,
            class_name: inst.class_name,
        },
        ground_truth: AnalysisResult {
            root_cause: inst.root_cause,
            solution: inst.solution,
            evidence: inst.evidence,
            responsibility: inst.responsibility,
        },
        logs,
        advisor,
    }
}

fn sources() -> Vec<SourceFile> {
    let mut out = Vec::new();
    for class in UDF_CLASSES {
        out.push(SourceFile {
            path: format!("com/acme/etl/{class}.java"),
            content: format!(
                "package com.acme.etl;\n\nimport org.apache.flink.api.common.functions.MapFunction;\n\n\
public class {class} implements MapFunction<Event, Event> {{\n    private final LookupTable table = new LookupTable();\n\n\
    @Override\n    public Event map(Event e) {{\n        String region = e.attributes.get(\"region\");\n\
        // region is missing for replayed events\n        e.regionCode = table.lookup(region).code;\n        return e;\n    }}\n}}\n"
            ),
        });
    }
    out.push(SourceFile {
        path: "com/acme/etl/LookupTable.java".into(),
        content: "package com.acme.etl;\n\nimport java.util.HashMap;\n\npublic class LookupTable {\n    private final HashMap<String, Entry> entries = new HashMap<>();\n\n    public Entry lookup(String key) {\n        return entries.get(key);\n    }\n}\n".into(),
    });
    out.push(SourceFile {
        path: "com/acme/etl/Event.java".into(),
        content: "package com.acme.etl;\n\nimport java.util.Map;\n\npublic class Event {\n    public Map<String, String> attributes;\n    public String regionCode;\n}\n".into(),
    });
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out
}

fn knowledge() -> Vec<KnowledgeRecord> {
    let k = |e: &str, a: &str| KnowledgeRecord {
        example: e.into(),
        answer: a.into(),
    };
    vec![
        k(
            "ERROR TaskExecutor - Task Join (2/4) failed: java.lang.OutOfMemoryError: GC overhead limit exceeded",
            "{\"interpretations\": [\"the join operator exhausted its heap\"], \"evidences\": [\"java.lang.OutOfMemoryError: GC overhead limit exceeded\"]}",
        ),
        k(
            "ERROR KafkaSink - Produce request to broker-3 failed: org.apache.kafka.common.errors.TimeoutException",
            "{\"interpretations\": [\"the downstream Kafka broker timed out\"], \"evidences\": [\"org.apache.kafka.common.errors.TimeoutException\"]}",
        ),
        k(
            "WARN Container container_17 killed by node manager: exceeded physical memory",
            "{\"interpretations\": [\"the container used more memory than requested\"], \"evidences\": [\"exceeded physical memory\"]}",
        ),
        k(
            "ERROR Kernel reported EXT4-fs error on /dev/sdd",
            "{\"interpretations\": [\"a local disk is failing\"], \"evidences\": [\"EXT4-fs error on /dev/sdd\"]}",
        ),
        k(
            "responsibility rule: every timeout is the platform's fault",
            "{\"interpretations\": [], \"evidences\": []}",
        ),
    ]
}

/// Deterministic bundle of `count` scenarios alternating user and platform
/// responsibility.
pub fn generate_scenarios(seed: u64, count: usize) -> ScenarioBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let scenarios = (0..count)
        .map(|i| scenario(i, &mut rng, &mut used))
        .collect();
    ScenarioBundle {
        seed,
        scenarios,
        sources: sources(),
        knowledge: knowledge(),
    }
}
