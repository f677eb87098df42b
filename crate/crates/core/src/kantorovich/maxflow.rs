//! Edmonds–Karp max-flow on the bipartite admissibility graph.

use std::collections::VecDeque;

struct Edge {
    to: usize,
    cap: f64,
}

/// Maximum flow that can be routed from the source weights to the target
/// weights using only admissible arcs.
pub(crate) fn bipartite_max_flow(
    supply: &[f64],
    demand: &[f64],
    admissible: impl Fn(usize, usize) -> bool,
) -> f64 {
    let (m, n) = (supply.len(), demand.len());
    let s = m + n;
    let t = s + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n + 2];
    let mut add = |edges: &mut Vec<Edge>, a: usize, b: usize, cap: f64| {
        adj[a].push(edges.len());
        edges.push(Edge { to: b, cap });
        adj[b].push(edges.len());
        edges.push(Edge { to: a, cap: 0.0 });
    };
    for (i, &w) in supply.iter().enumerate() {
        add(&mut edges, s, i, w);
    }
    for (j, &w) in demand.iter().enumerate() {
        add(&mut edges, m + j, t, w);
    }
    for i in 0..m {
        for j in 0..n {
            if admissible(i, j) {
                add(&mut edges, i, m + j, f64::INFINITY);
            }
        }
    }

    const EPS: f64 = 1e-15;
    let mut total = 0.0;
    loop {
        let mut prev: Vec<Option<usize>> = vec![None; m + n + 2];
        let mut seen = vec![false; m + n + 2];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &e in &adj[u] {
                let v = edges[e].to;
                if !seen[v] && edges[e].cap > EPS {
                    seen[v] = true;
                    prev[v] = Some(e);
                    queue.push_back(v);
                }
            }
        }
        if !seen[t] {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = t;
        while let Some(e) = prev[v] {
            bottleneck = bottleneck.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = t;
        while let Some(e) = prev[v] {
            edges[e].cap -= bottleneck;
            edges[e ^ 1].cap += bottleneck;
            v = edges[e ^ 1].to;
        }
        total += bottleneck;
    }
    total
}
