/// Makes every label occupy one contiguous interval.
///
/// Lines are scanned in order. When a line carries a label whose earlier run
/// already closed, the cheapest of three local repairs is applied: re-extend
/// the earlier run over the gap, relabel the new run to the current label, or
/// hand the earlier run to the label that follows it. Ties prefer that order.
/// Label ids are kept as given.
pub fn remove_overlaps(labels: &[usize]) -> Vec<usize> {
    let mut out = labels.to_vec();
    let mut i = 1;
    while i < out.len() {
        let cur = out[i - 1];
        let label = out[i];
        if label == cur {
            i += 1;
            continue;
        }
        let Some(last) = out[..i].iter().rposition(|&l| l == label) else {
            i += 1;
            continue;
        };
        let first = out[..=last]
            .iter()
            .position(|&l| l == label)
            .expect("last is an occurrence");
        let run_end = (i..out.len())
            .find(|&k| out[k] != label)
            .unwrap_or(out.len());
        let extend_back = i - last - 1;
        let relabel_run = run_end - i;
        let hand_over = last - first + 1;
        if extend_back <= relabel_run && extend_back <= hand_over {
            out[last + 1..i].fill(label);
        } else if relabel_run <= hand_over {
            out[i..run_end].fill(cur);
        } else {
            let next = out[last + 1];
            out[first..=last].fill(next);
        }
        i = run_end;
    }
    out
}

pub fn is_contiguous(labels: &[usize]) -> bool {
    let mut seen = std::collections::HashSet::new();
    labels
        .iter()
        .enumerate()
        .all(|(i, &l)| (i > 0 && labels[i - 1] == l) || seen.insert(l))
}

/// Number of positions whose label changed.
pub fn flips(before: &[usize], after: &[usize]) -> usize {
    before.iter().zip(after).filter(|(a, b)| a != b).count()
}
