use std::sync::Arc;

use proptest::prelude::*;
use rca_core::llm::{LlmBackend, MockBackend, MockRequest};
use rca_core::obsk::SnapshotStore;
use rca_core::tools::{dispatch, DispatchContext, DispatchStatus, ToolCall, ToolRegistry};
use rca_log_expert::*;
use serde_json::json;

const VOCAB: &[&str] = &[
    "INFO checkpoint 41 completed in 233 ms",
    "INFO heartbeat from taskmanager-3 received",
    "WARN backpressure high on sink subtask 2",
    "ERROR java.net.SocketTimeoutException: Read timed out",
    "at org.elasticsearch.client.RestClient.performRequest(RestClient.java:283)",
    "INFO source offset committed for partition 7",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn partition_is_contiguous_and_covers(picks in proptest::collection::vec((0usize..6, 0u32..50), 1..40)) {
        let log: String = picks.iter().map(|(i, n)| format!("{} #{n}\n", VOCAB[*i])).collect();
        let b = MockBackend::echo().with_dim(32);
        let chunks = partition(&log, &b, DEFAULT_WINDOW, DEFAULT_TAU).unwrap();
        let lines = split_log(&log);
        let mut next = 0;
        let mut joined = Vec::new();
        for c in &chunks {
            prop_assert_eq!(c.range.start, next);
            prop_assert!(c.range.end > c.range.start);
            prop_assert_eq!(c.lines.len(), c.range.len());
            next = c.range.end;
            joined.extend(c.lines.iter().cloned());
        }
        prop_assert_eq!(next, lines.len());
        prop_assert_eq!(joined, lines);
    }
}

/// Chunk analysis quotes one real line and one invented line; summary is fixed.
fn expert_mock() -> MockBackend {
    MockBackend::with_responder(|req: &MockRequest| {
        let user = req.exchange.last_user_content().unwrap_or_default();
        if let Some(start) = user.find(LOG_BEGIN) {
            let body = &user[start + LOG_BEGIN.len() + 1..user.find(LOG_END).unwrap()];
            let first = body.lines().next().unwrap_or_default().replace('"', "'");
            return Ok(format!(
                "{{\"interpretations\": [\"first line\", \"made up\"], \"evidences\": [\"{first}\", \"OutOfMemoryError in operator 12 while spilling state\"]}}"
            ));
        }
        Ok("{\"interpretation\": \"Elasticsearch reads time out\", \"evidence\": \"Read timed out\"}".into())
    })
}

#[test]
fn pipeline_keeps_only_supported_evidence() {
    let log = (0..30)
        .map(|i| {
            if i % 10 == 9 {
                "ERROR java.net.SocketTimeoutException: Read timed out".to_string()
            } else {
                format!("INFO checkpoint {i} completed")
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let b = expert_mock();
    let expert = LogExpert::default();
    let report = expert.run(&b, &log).unwrap();
    assert!(!report.chunks.is_empty());
    for c in &report.chunks {
        assert_eq!(c.raw.len(), 2);
        assert!(c
            .kept
            .evidences
            .iter()
            .all(|e| !e.contains("OutOfMemoryError")));
        for e in &c.kept.evidences {
            assert!(evidence_accepted(e, &c.chunk.text()));
        }
    }
    assert_eq!(
        report.summary.interpretation,
        "Elasticsearch reads time out"
    );
    assert_eq!(
        report.summary.render(),
        "Interpretation: Elasticsearch reads time out\nEvidence: Read timed out"
    );
}

#[test]
fn tool_resolves_snapshot_and_runs() {
    let backend: Arc<dyn LlmBackend> = Arc::new(expert_mock());
    let mut registry = ToolRegistry::new();
    register(&mut registry, LogExpert::default(), backend).unwrap();
    registry.register_finalize().unwrap();
    let mut store = SnapshotStore::default();
    let text: String = (0..20)
        .map(|i| format!("WARN retry {i} against es-cluster\n"))
        .collect();
    let key = store.put(&text, "runtime_log").unwrap();
    let call = ToolCall::from_value(
        &json!({"function": "log_agent", "kwargs": {"snapshot": key.as_str()}}),
    )
    .unwrap();
    let mut ctx = DispatchContext {
        store: &mut store,
        dedup_threshold: 0.9,
    };
    let out = dispatch(&registry, &call, &mut ctx);
    assert!(
        matches!(out.status, DispatchStatus::Ok(_)),
        "{}",
        out.observation
    );
    assert!(out
        .observation
        .starts_with("Interpretation: Elasticsearch reads time out"));
}

#[test]
fn empty_findings_give_sentinel() {
    let b =
        MockBackend::with_responder(|_| Ok("{\"interpretations\": [], \"evidences\": []}".into()));
    let report = LogExpert::default().run(&b, "a\nb\nc").unwrap();
    assert_eq!(report.summary.interpretation, NO_EVIDENCE);
}

#[test]
fn retrieval_ingest_applies_deny_list() {
    let b = MockBackend::echo();
    let data = "{\"example\": \"Read timed out\", \"answer\": \"network issue\"}\n\n{\"example\": \"x\", \"answer\": \"labeling rule: always platform\"}\n";
    let idx = RetrievalIndex::ingest_jsonl(data.as_bytes(), &b, &DenyList::new(["labeling rule"]))
        .unwrap();
    assert_eq!(idx.examples.len(), 1);
    assert_eq!(idx.rejected, 1);
    assert!(RetrievalIndex::ingest_jsonl("not json".as_bytes(), &b, &DenyList::default()).is_err());
}
