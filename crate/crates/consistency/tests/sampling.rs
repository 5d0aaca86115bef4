use std::sync::Arc;

use rca_consistency::*;
use rca_core::agent::{AgentConfig, BasePrompts};
use rca_core::llm::{hash_embedding, LlmBackend, LlmError, MockBackend, MockRequest};
use rca_core::tools::{
    render_documentation, AnalysisResult, ParamSpec, ParamType, Responsibility, ToolKind,
    ToolOutput, ToolRegistry, ToolSpec,
};
use serde_json::{Map, Value};

fn info(name: &str) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: format!("{name} entries of a job."),
        params: vec![ParamSpec::required(
            "job_id",
            ParamType::String,
            "Job identifier.",
        )],
        kind: ToolKind::Info,
        stateless: true,
    }
}

fn env() -> Environment {
    let mut r = ToolRegistry::new();
    for name in ["runtime_log", "platform_log"] {
        let n = name.to_string();
        r.register(
            info(name),
            Arc::new(move |kw: &Map<String, Value>| {
                Ok(ToolOutput::Entries(vec![
                    format!("{n} for {}", kw["job_id"]),
                    "java.net.SocketTimeoutException: Read timed out after 30000 ms".into(),
                ]))
            }),
        )
        .unwrap();
    }
    r.register(
        ToolSpec {
            name: "log_agent".into(),
            description: "Analyse a log.".into(),
            params: vec![ParamSpec::required(
                "snapshot",
                ParamType::Snapshot,
                "Snapshot key.",
            )],
            kind: ToolKind::Expert,
            stateless: true,
        },
        Arc::new(|_: &Map<String, Value>| {
            Ok(ToolOutput::Text(
                "The sink timed out talking to Elasticsearch.".into(),
            ))
        }),
    )
    .unwrap();
    r.register_finalize().unwrap();
    let docs = render_documentation(&r).unwrap();
    Environment {
        config: AgentConfig::new(BasePrompts::with_tool_docs(docs)),
        registry: Arc::new(r),
        task: "Diagnose job-7.".into(),
    }
}

fn steps_in(req: &MockRequest) -> usize {
    req.exchange
        .last_user_content()
        .unwrap_or_default()
        .matches("\nFunction: ")
        .count()
}

fn last_key(req: &MockRequest) -> String {
    let text = req.exchange.last_user_content().unwrap_or_default();
    let i = text.rfind("[ snapshot: ").expect("a snapshot line");
    text[i + 12..i + 22].to_string()
}

fn finalize(root: &str, resp: &str) -> String {
    format!(
        "Thought: done\n{{\"function\": \"finalize\", \"kwargs\": {{\"root_cause\": \"{root}\", \"solution\": \"raise the timeout\", \"evidence\": \"Read timed out\", \"responsibility\": \"{resp}\"}}}}"
    )
}

/// Greedy script: runtime_log, log_agent on its snapshot, finalize.
fn greedy_backend() -> MockBackend {
    MockBackend::with_responder(|req| {
        Ok(match steps_in(req) {
            0 => r#"Thought: read logs
{"function": "runtime_log", "kwargs": {"job_id": "job-7"}}"#
                .into(),
            1 => format!("Thought: analyse\n{{\"function\": \"log_agent\", \"kwargs\": {{\"snapshot\": \"{}\"}}}}", last_key(req)),
            _ => finalize("Elasticsearch sink timed out", "Platform"),
        })
    })
}

/// Branch that takes `extra` platform_log steps with distinct ids before finalizing.
fn branch_backend(extra: usize, root: &'static str) -> Arc<dyn LlmBackend> {
    Arc::new(MockBackend::with_responder(move |req| {
        let taken = steps_in(req) - 2;
        Ok(if taken < extra {
            format!("Thought: more\n{{\"function\": \"platform_log\", \"kwargs\": {{\"job_id\": \"job-{taken}\"}}}}")
        } else {
            finalize(root, "Platform")
        })
    }))
}

#[test]
fn tsc_immediate_finalize_shares_prefix() {
    let env = env();
    let greedy = run_greedy(&env, &greedy_backend()).unwrap();
    assert!(greedy.trajectory().passed);
    assert_eq!(greedy.trajectory().steps.len(), 3);
    let factory = |_i: usize| branch_backend(0, "Elasticsearch sink timed out");
    let c = tsc(&env, &greedy, &factory, 3, 15).unwrap();
    assert_eq!(c.len(), 3);
    for cand in &c {
        assert_eq!(cand.trajectory.seed_prefix_len, 2);
        assert_eq!(cand.trajectory.steps[..2], greedy.trajectory().steps[..2]);
        assert_eq!(cand.trajectory.steps.len(), 3);
    }
}

#[test]
fn tsc_branch_with_extra_steps_and_bound() {
    let env = env();
    let greedy = run_greedy(&env, &greedy_backend()).unwrap();
    let factory = |i: usize| match i {
        0 => branch_backend(2, "a"),
        1 => branch_backend(20, "never"),
        _ => branch_backend(0, "b"),
    };
    let c = tsc(&env, &greedy, &factory, 3, 6).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c[0].trajectory.steps.len(), 5);
    assert_eq!(c[0].result.root_cause, "a");
    assert_eq!(c[0].trajectory.steps[..2], greedy.trajectory().steps[..2]);
    assert_eq!(c[1].result.root_cause, "b");
}

#[test]
fn tsc_backend_calls_are_bounded() {
    let env = env();
    let g = greedy_backend();
    let greedy = run_greedy(&env, &g).unwrap();
    let mocks: Vec<Arc<MockBackend>> = (0..4)
        .map(|i| {
            Arc::new(MockBackend::with_responder(move |req| {
                let taken = steps_in(req) - 2;
                Ok(if taken < i * 3 {
                    format!("{{\"function\": \"platform_log\", \"kwargs\": {{\"job_id\": \"j{taken}\"}}}}")
                } else {
                    finalize("x", "User")
                })
            }))
        })
        .collect();
    let factory = |i: usize| mocks[i].clone() as Arc<dyn LlmBackend>;
    let bound = 8;
    tsc(&env, &greedy, &factory, 4, bound).unwrap();
    let branch_steps: usize = mocks.iter().map(|m| m.call_count()).sum();
    for m in &mocks {
        assert!(m.call_count() <= bound - 2);
    }
    assert!(g.call_count() + branch_steps <= g.call_count() + 4 * (bound - 2));
}

#[test]
fn tsc_requires_passed_greedy() {
    let env = env();
    let bad = MockBackend::with_responder(|_| Ok("no action here".into()));
    let greedy = run_greedy(&env, &bad).unwrap();
    let factory = |_i: usize| branch_backend(0, "x");
    assert!(matches!(
        tsc(&env, &greedy, &factory, 2, 15),
        Err(ConsistencyError::GreedyFailed)
    ));
}

#[test]
fn stepwise_drops_non_finalizing_samples() {
    let env = env();
    let greedy = run_greedy(&env, &greedy_backend()).unwrap();
    let factory = |i: usize| -> Arc<dyn LlmBackend> {
        if i.is_multiple_of(2) {
            branch_backend(0, "sampled")
        } else {
            branch_backend(1, "late")
        }
    };
    let c = sc_stepwise(&env, &greedy, &factory, 4).unwrap();
    assert_eq!(c.len(), 2);
    assert!(c
        .iter()
        .all(|x| x.result.root_cause == "sampled" && x.trajectory.steps.len() == 3));
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn vote_trivial_cases() {
    let b = MockBackend::echo();
    assert_eq!(vote_with_embedding(&strings(&["only"]), &b).unwrap(), 0);
    assert_eq!(
        vote_with_embedding(&strings(&["same", "same", "same"]), &b).unwrap(),
        0
    );
}

#[test]
fn vote_prefers_majority_cluster_by_hand_cosines() {
    let b = MockBackend::echo().with_dim(256);
    let texts = strings(&[
        "elasticsearch sink socket timeout while flushing bulk requests",
        "elasticsearch sink socket timeout while flushing bulk request",
        "user code threw NullPointerException in map function",
    ]);
    // independent computation of the cosine to the mean
    let vs: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| hash_embedding(t, 256, b.seed()))
        .collect();
    let mean: Vec<f64> = (0..256)
        .map(|d| vs.iter().map(|v| v[d]).sum::<f64>() / 3.0)
        .collect();
    let cos = |a: &[f64], m: &[f64]| {
        let dot: f64 = a.iter().zip(m).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt()
            * m.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let sims: Vec<f64> = vs.iter().map(|v| cos(v, &mean)).collect();
    let expected = (0..3).fold(0, |best, i| {
        if sims[i] > sims[best] + 1e-12 {
            i
        } else {
            best
        }
    });
    let got = vote_with_embedding(&texts, &b).unwrap();
    assert_eq!(got, expected);
    assert_ne!(got, 2);
}

#[test]
fn vote_invariant_under_duplicating_candidates() {
    let b = MockBackend::echo();
    let texts = strings(&[
        "disk quota exceeded",
        "disk quota was exceeded",
        "network partition",
        "quota exceeded on disk",
    ]);
    let once = vote_with_embedding(&texts, &b).unwrap();
    let twice: Vec<String> = texts.iter().chain(texts.iter()).cloned().collect();
    let i = vote_with_embedding(&twice, &b).unwrap();
    assert_eq!(twice[i], texts[once]);
}

/// Replies with the first candidate as written in the prompt.
fn first_candidate_echo() -> MockBackend {
    MockBackend::with_responder(|req| {
        let text = req.exchange.last_user_content().unwrap_or_default();
        let line = text
            .lines()
            .find(|l| l.starts_with("Candidate 1: "))
            .unwrap_or_default();
        Ok(line.to_string())
    })
}

#[test]
fn single_candidate_is_returned_by_both_methods() {
    let r = AnalysisResult {
        root_cause: "checkpoint storage full".into(),
        solution: "clean the bucket".into(),
        evidence: "No space left on device".into(),
        responsibility: Responsibility::User,
    };
    for method in [Aggregation::EmbeddingVote, Aggregation::LlmAggregate] {
        let out =
            aggregate_results(std::slice::from_ref(&r), method, &first_candidate_echo()).unwrap();
        assert_eq!(out.result, r);
        assert_eq!(out.candidate_count, 1);
        assert_eq!(
            out.chosen_index.is_some(),
            method == Aggregation::EmbeddingVote
        );
    }
}

#[test]
fn llm_failure_falls_back_to_vote() {
    let b = MockBackend::with_responder(|_| {
        Err(LlmError::Transport {
            attempts: 3,
            message: "down".into(),
        })
    });
    let texts = strings(&["a b c", "a b c d", "x y z"]);
    let (text, fell_back) = aggregate_with_llm(&texts, &b).unwrap();
    assert!(fell_back);
    assert_eq!(text, texts[vote_with_embedding(&texts, &b).unwrap()]);
}

#[test]
fn run_with_consistency_k1_matches_greedy() {
    let env = env();
    let factory = |_i: usize| branch_backend(0, "Elasticsearch sink timed out");
    let greedy = run_with_consistency(
        &env,
        &ConsistencyConfig::default(),
        &greedy_backend(),
        &factory,
    )
    .unwrap();
    for aggregation in [Aggregation::EmbeddingVote, Aggregation::LlmAggregate] {
        for mode in [Mode::Sc, Mode::Tsc] {
            let config = ConsistencyConfig {
                mode,
                aggregation,
                k: 1,
                ..Default::default()
            };
            let agg = MockBackend::with_responder({
                let g = greedy_backend();
                let f = first_candidate_echo();
                move |req| {
                    if req.exchange.system_prompt == MERGE_SYSTEM {
                        f.complete(&req.exchange, &req.params)
                    } else {
                        g.complete(&req.exchange, &req.params)
                    }
                }
            });
            let run = run_with_consistency(&env, &config, &agg, &factory).unwrap();
            assert_eq!(run.result(), greedy.result(), "{mode:?} {aggregation:?}");
        }
    }
}
