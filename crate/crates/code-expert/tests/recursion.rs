use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use rca_code_expert::*;
use rca_core::llm::{MockBackend, MockRequest};

fn write(root: &Path, rel: &str, body: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, body).unwrap();
}

/// Answers analysis prompts from a suggestion graph and anything else with a summary.
fn graph_mock(edges: HashMap<String, Vec<String>>) -> MockBackend {
    MockBackend::with_responder(move |req: &MockRequest| {
        let user = req
            .exchange
            .last_user_content()
            .unwrap_or_default()
            .to_string();
        if let Some(rest) = user.split("\nClass: ").nth(1) {
            let class = rest.lines().next().unwrap().trim().to_string();
            let next = edges.get(&class).cloned().unwrap_or_default();
            let list = next
                .iter()
                .map(|s| format!("\"{s}\""))
                .collect::<Vec<_>>()
                .join(", ");
            return Ok(format!(
                "{{\"analysis\": \"{class} looked at\", \"suggestions\": [{list}]}}"
            ));
        }
        Ok("summary of the code".into())
    })
}

fn analyze_calls(b: &MockBackend) -> usize {
    b.calls()
        .iter()
        .filter(|c| {
            c.exchange
                .last_user_content()
                .unwrap_or_default()
                .contains("\nClass: ")
        })
        .count()
}

fn repo(classes: &[&str]) -> (tempfile::TempDir, RepoIndex) {
    let dir = tempfile::tempdir().unwrap();
    for c in classes {
        write(
            dir.path(),
            &format!("src/main/java/com/acme/{c}.java"),
            &format!("class {c} {{ }}"),
        );
    }
    let idx = RepoIndex::with_default_externals(dir.path()).unwrap();
    (dir, idx)
}

fn edges(pairs: &[(&str, &[&str])]) -> HashMap<String, Vec<String>> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect()
}

#[test]
fn no_suggestions_analyses_one_file() {
    let (_d, idx) = repo(&["A"]);
    let b = graph_mock(HashMap::new());
    let r = run_code_expert(&b, &idx, "A", 12, 3).unwrap();
    assert_eq!(r.analyses.len(), 1);
    assert_eq!(analyze_calls(&b), 1);
    assert_eq!(r.summary, "summary of the code");
}

#[test]
fn chain_stops_at_external_class() {
    let (_d, idx) = repo(&["A", "B"]);
    let b = graph_mock(edges(&[
        ("A", &["B"]),
        ("B", &["org.apache.flink.streaming.api.C"]),
    ]));
    let r = run_code_expert(&b, &idx, "A", 12, 3).unwrap();
    assert_eq!(analyze_calls(&b), 2);
    assert_eq!(r.external, vec!["org.apache.flink.streaming.api.C"]);
}

#[test]
fn cycle_is_broken_by_visited_set() {
    let (_d, idx) = repo(&["A", "B"]);
    let b = graph_mock(edges(&[("A", &["B"]), ("B", &["A"])]));
    let r = run_code_expert(&b, &idx, "A", 12, 3).unwrap();
    assert_eq!(analyze_calls(&b), 2);
    assert_eq!(r.analyses.len(), 2);
}

#[test]
fn unknown_root_reports_not_found() {
    let (_d, idx) = repo(&["A"]);
    let b = graph_mock(HashMap::new());
    let r = run_code_expert(&b, &idx, "Missing", 12, 3).unwrap();
    assert!(!r.root_found);
    assert_eq!(r.summary, CLASS_NOT_FOUND);
    assert_eq!(b.call_count(), 0);
}

#[test]
fn duplicate_stems_prefer_shallow_then_lexicographic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "b/deep/x/Sink.java", "deep");
    write(dir.path(), "b/Sink.java", "shallow b");
    write(dir.path(), "a/Sink.java", "shallow a");
    let idx = RepoIndex::with_default_externals(dir.path()).unwrap();
    assert_eq!(
        idx.find_class_file("Sink"),
        Lookup::Found(dir.path().join("a/Sink.java"))
    );
    assert_eq!(idx.ambiguous, vec!["Sink"]);
    assert_eq!(
        idx.find_class_file("com.acme.Sink"),
        Lookup::Found(dir.path().join("a/Sink.java"))
    );
    assert_eq!(idx.find_class_file("java.util.Sink"), Lookup::External);
    assert_eq!(idx.find_class_file("Nope"), Lookup::NotFound);
}

fn reachable(edges: &HashMap<String, Vec<String>>, root: &str, present: &HashSet<String>) -> usize {
    let mut seen = HashSet::from([root.to_string()]);
    let mut stack = vec![root.to_string()];
    let mut n = 0;
    while let Some(c) = stack.pop() {
        if !present.contains(&c) {
            continue;
        }
        n += 1;
        for s in edges.get(&c).into_iter().flatten() {
            if seen.insert(s.clone()) {
                stack.push(s.clone());
            }
        }
    }
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analysis_calls_bounded_by_cap_and_reachability(
        adj in proptest::collection::vec(proptest::collection::vec(0usize..10, 0..4), 8),
        cap in 1usize..10,
    ) {
        let names: Vec<String> = (0..10).map(|i| format!("K{i}")).collect();
        let present: Vec<&str> = names[..8].iter().map(String::as_str).collect();
        let (_d, idx) = repo(&present);
        let e: HashMap<String, Vec<String>> = adj.iter().enumerate()
            .map(|(i, v)| (names[i].clone(), v.iter().map(|&j| names[j].clone()).collect())).collect();
        let b = graph_mock(e.clone());
        let r = run_code_expert(&b, &idx, "K0", cap, 3).unwrap();
        let calls = analyze_calls(&b);
        let present: HashSet<String> = present.iter().map(|s| s.to_string()).collect();
        prop_assert_eq!(calls, cap.min(reachable(&e, "K0", &present)));
        prop_assert_eq!(r.analyses.len(), calls);
        let uniq: HashSet<_> = r.analyses.iter().map(|a| a.class_name.clone()).collect();
        prop_assert_eq!(uniq.len(), calls);
    }
}
