//! Deterministic Louvain community detection.
//!
//! Vertices are visited in natural order and ties between candidate
//! communities go to the lowest community id, so the result depends only on
//! the graph.

use crate::graph::SimilarityGraph;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Level {
    n: usize,
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn from_graph(g: &SimilarityGraph) -> Self {
        let mut adj = vec![Vec::new(); g.n];
        for &(i, j, w) in &g.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        Self {
            n: g.n,
            adj,
            self_loops: vec![0.0; g.n],
        }
    }

    fn degree(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|e| e.1).sum::<f64>() + 2.0 * self.self_loops[v]
    }

    /// Local moving phase. Returns true if any vertex changed community.
    fn local_moves(&self, community: &mut [usize], m2: f64) -> bool {
        let degree: Vec<f64> = (0..self.n).map(|v| self.degree(v)).collect();
        let mut tot = vec![0.0; self.n];
        for v in 0..self.n {
            tot[community[v]] += degree[v];
        }
        let mut links = vec![0.0; self.n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for v in 0..self.n {
                let own = community[v];
                for &(u, w) in &self.adj[v] {
                    let c = community[u];
                    if links[c] == 0.0 {
                        touched.push(c);
                    }
                    links[c] += w;
                }
                tot[own] -= degree[v];
                let gain = |c: usize, links: &[f64]| links[c] - tot[c] * degree[v] / m2;
                let stay = gain(own, &links);
                touched.sort_unstable();
                touched.dedup();
                // ascending scan with strict improvement keeps the lowest id among ties
                let mut best = own;
                let mut best_gain = f64::NEG_INFINITY;
                for &c in &touched {
                    let g = gain(c, &links);
                    if g > best_gain + MIN_GAIN {
                        best = c;
                        best_gain = g;
                    }
                }
                if best_gain <= stay + MIN_GAIN {
                    best = own;
                }
                tot[best] += degree[v];
                if best != own {
                    community[v] = best;
                    moved = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        moved_any
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Level {
        let mut next = Level {
            n: count,
            adj: vec![Vec::new(); count],
            self_loops: vec![0.0; count],
        };
        let mut weights: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for v in 0..self.n {
            let cv = community[v];
            next.self_loops[cv] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                let cu = community[u];
                if cu == cv {
                    // each internal edge is seen from both ends
                    next.self_loops[cv] += w / 2.0;
                } else if cv < cu {
                    *weights.entry((cv, cu)).or_default() += w;
                }
            }
        }
        for ((a, b), w) in weights {
            next.adj[a].push((b, w));
            next.adj[b].push((a, w));
        }
        next
    }
}

/// Renumbers labels to 0.. in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Community label per vertex, numbered by first appearance.
pub fn louvain(graph: &SimilarityGraph) -> Vec<usize> {
    let n = graph.n;
    if n == 0 {
        return Vec::new();
    }
    let m2 = 2.0 * graph.total_weight();
    if m2 <= 0.0 {
        return (0..n).collect();
    }
    let mut level = Level::from_graph(graph);
    let mut membership: Vec<usize> = (0..n).collect();
    loop {
        let mut community: Vec<usize> = (0..level.n).collect();
        if !level.local_moves(&mut community, m2) {
            break;
        }
        let community = canonical_labels(&community);
        let count = community.iter().max().map_or(0, |&c| c + 1);
        for m in membership.iter_mut() {
            *m = community[*m];
        }
        if count == level.n {
            break;
        }
        level = level.aggregate(&community, count);
    }
    canonical_labels(&membership)
}

/// Newman modularity of a labelling.
pub fn modularity(graph: &SimilarityGraph, labels: &[usize]) -> f64 {
    let m = graph.total_weight();
    if m <= 0.0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for &(i, j, w) in &graph.edges {
        if labels[i] == labels[j] {
            internal[labels[i]] += w;
        }
        tot[labels[i]] += w;
        tot[labels[j]] += w;
    }
    (0..k)
        .map(|c| internal[c] / m - (tot[c] / (2.0 * m)).powi(2))
        .sum()
}
