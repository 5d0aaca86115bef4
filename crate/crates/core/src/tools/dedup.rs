use std::collections::HashSet;

use crate::text::levenshtein_chars;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.9;

/// Drops every entry whose normalized Levenshtein similarity to an already
/// kept entry reaches `threshold`. Order is preserved and the first member of
/// each group wins.
pub fn deduplicate_entries(entries: &[String], threshold: f64) -> Vec<String> {
    let mut exact = HashSet::new();
    let mut kept: Vec<(String, Vec<char>)> = Vec::new();
    for entry in entries {
        if !exact.insert(entry.as_str()) {
            continue;
        }
        let chars: Vec<char> = entry.chars().collect();
        let duplicate = kept
            .iter()
            .any(|(_, other)| similar(&chars, other, threshold));
        if !duplicate {
            kept.push((entry.clone(), chars));
        }
    }
    kept.into_iter().map(|(s, _)| s).collect()
}

fn similar(a: &[char], b: &[char], threshold: f64) -> bool {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return true;
    }
    // distance is at least the length gap, so skip pairs that cannot qualify
    let gap = a.len().abs_diff(b.len());
    if 1.0 - (gap as f64) / (longest as f64) < threshold {
        return false;
    }
    1.0 - levenshtein_chars(a, b) as f64 / longest as f64 >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn exact_duplicates() {
        assert_eq!(
            deduplicate_entries(&s(&["a", "a", "b"]), 0.9),
            s(&["a", "b"])
        );
    }

    #[test]
    fn empty_input() {
        assert!(deduplicate_entries(&[], 0.9).is_empty());
    }

    #[test]
    fn near_duplicates_collapse_to_first() {
        let lines = s(&[
            "10:15:32 INFO checkpoint 17 completed for job-a in 412 ms ok",
            "10:17:49 INFO checkpoint 17 completed for job-a in 412 ms ok",
            "10:18:00 ERROR java.net.SocketTimeoutException: Read timed out",
        ]);
        let out = deduplicate_entries(&lines, 0.9);
        assert_eq!(out, vec![lines[0].clone(), lines[2].clone()]);
    }

    #[test]
    fn threshold_one_only_drops_exact() {
        assert_eq!(
            deduplicate_entries(&s(&["abc", "abd"]), 1.0),
            s(&["abc", "abd"])
        );
    }
}
