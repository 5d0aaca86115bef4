use rca_core::llm::{cosine, LlmError};

pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_TAU: f64 = 1.0;

/// Splits on newlines, dropping blank lines.
pub fn split_log(log: &str) -> Vec<String> {
    log.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

/// Undirected weighted graph over log lines. Edges are stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl SimilarityGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        assert!(
            i < self.n && j < self.n && i != j,
            "edge ({i}, {j}) out of range or a self-loop"
        );
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges.push((a, b, w));
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Builds the windowed graph with weight `max(0, cos) * exp(-d / tau)` where
/// `d` is the line distance. Zero-weight pairs are left out.
pub fn build_graph(
    embeddings: &[Vec<f64>],
    window: usize,
    tau: f64,
) -> Result<SimilarityGraph, LlmError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LlmError::Precondition(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let n = embeddings.len();
    let mut g = SimilarityGraph::new(n);
    for i in 0..n {
        for j in (i + 1)..n.min(i + window + 1) {
            let sim = cosine(&embeddings[i], &embeddings[j])?;
            if sim <= 0.0 {
                continue;
            }
            let w = sim * (-((j - i) as f64) / tau).exp();
            if w > 0.0 {
                g.edges.push((i, j, w));
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_drops_blank_lines() {
        assert_eq!(split_log("a\nb\n\nc"), vec!["a", "b", "c"]);
        assert_eq!(split_log("only"), vec!["only"]);
        assert_eq!(split_log("x\r\n  \r\ny\n"), vec!["x", "y"]);
    }

    #[test]
    fn identical_neighbours_decay_once() {
        let v = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let g = build_graph(&v, 200, 1.0).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].2 - 0.36787944117144233).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_opposite_pairs_dropped() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let g = build_graph(&v, 200, 1.0).unwrap();
        assert!(g.edges.iter().all(|e| e.2 > 0.0));
        assert!(g.edges.is_empty() || g.edges.iter().all(|&(i, j, _)| !(i == 0 && j == 2)));
    }

    #[test]
    fn window_bound() {
        let v = vec![vec![1.0]; 203];
        let g = build_graph(&v, 200, 1.0).unwrap();
        assert!(g.edges.iter().any(|&(i, j, _)| i == 0 && j == 200));
        assert!(!g.edges.iter().any(|&(i, j, _)| j - i > 200));
    }
}
