//! Primal network simplex for the transportation problem on an explicit
//! arc list. Forbidden arcs are simply absent.
//!
//! A root node is joined to every source and sink by an artificial arc.
//! Phase one drives the artificial flow to zero with unit costs on the
//! artificial arcs; phase two fixes their capacity at zero and optimizes
//! the real costs. Pivots follow Bland's rule: the lowest-index eligible
//! arc enters and ties in the ratio test leave by lowest index.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Arc {
    tail: usize,
    head: usize,
    cost: f64,
    upper: f64,
    flow: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PivotStats {
    pub phase1_pivots: usize,
    pub phase2_pivots: usize,
    pub degenerate_pivots: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutput {
    /// Flow on each input arc, in input order.
    pub flows: Vec<f64>,
    /// Dual `u_i` per source.
    pub source_duals: Vec<f64>,
    /// Dual `v_j` per sink.
    pub target_duals: Vec<f64>,
    pub stats: PivotStats,
}

const MAX_PIVOTS: usize = 1_000_000;
const TIE_TOL: f64 = 1e-14;

struct Network {
    arcs: Vec<Arc>,
    in_tree: Vec<bool>,
    nodes: usize,
    root: usize,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
}

impl Network {
    fn rebuild_tree(&mut self) {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.nodes];
        for (k, a) in self.arcs.iter().enumerate() {
            if self.in_tree[k] {
                adj[a.tail].push(k);
                adj[a.head].push(k);
            }
        }
        let mut seen = vec![false; self.nodes];
        seen[self.root] = true;
        self.depth[self.root] = 0;
        self.potential[self.root] = 0.0;
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            for &k in &adj[u] {
                let a = &self.arcs[k];
                let v = if a.tail == u { a.head } else { a.tail };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                self.parent[v] = u;
                self.parent_arc[v] = k;
                self.depth[v] = self.depth[u] + 1;
                // reduced cost c + pi(tail) - pi(head) vanishes on tree arcs
                self.potential[v] = if a.tail == u {
                    self.potential[u] + a.cost
                } else {
                    self.potential[u] - a.cost
                };
                queue.push_back(v);
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis is not a spanning tree");
    }

    fn reduced_cost(&self, k: usize) -> f64 {
        let a = &self.arcs[k];
        a.cost + self.potential[a.tail] - self.potential[a.head]
    }

    /// Runs pivots until no arc prices out; returns (pivots, degenerate).
    fn optimize(&mut self, rc_eps: f64) -> Result<(usize, usize)> {
        let mut pivots = 0;
        let mut degenerate = 0;
        loop {
            self.rebuild_tree();
            let entering = (0..self.arcs.len()).find(|&k| {
                !self.in_tree[k] && self.arcs[k].upper > 0.0 && self.reduced_cost(k) < -rc_eps
            });
            let Some(enter) = entering else {
                return Ok((pivots, degenerate));
            };
            if pivots >= MAX_PIVOTS {
                return Err(Error::InvalidInput(
                    "network simplex pivot limit reached".into(),
                ));
            }
            pivots += 1;

            // cycle: enter (u -> v), then the tree path v -> lca -> u
            let (u, v) = (self.arcs[enter].tail, self.arcs[enter].head);
            let mut cycle: Vec<(usize, bool)> = vec![(enter, true)];
            let mut u_side: Vec<(usize, bool)> = Vec::new();
            let (mut a, mut b) = (u, v);
            while a != b {
                if self.depth[a] >= self.depth[b] {
                    // traversed parent -> a
                    let k = self.parent_arc[a];
                    u_side.push((k, self.arcs[k].head == a));
                    a = self.parent[a];
                } else {
                    // traversed b -> parent
                    let k = self.parent_arc[b];
                    cycle.push((k, self.arcs[k].tail == b));
                    b = self.parent[b];
                }
            }
            cycle.extend(u_side.into_iter().rev());

            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &(k, forward) in &cycle {
                let arc = &self.arcs[k];
                let limit = if forward {
                    arc.upper - arc.flow
                } else {
                    arc.flow
                };
                let limit = limit.max(0.0);
                if limit < theta - TIE_TOL {
                    theta = limit;
                    leave = k;
                } else if limit <= theta + TIE_TOL && k < leave {
                    theta = theta.min(limit);
                    leave = k;
                }
            }
            if !theta.is_finite() {
                return Err(Error::InvalidInput(
                    "unbounded transportation problem".into(),
                ));
            }
            if theta <= TIE_TOL {
                degenerate += 1;
            }
            for &(k, forward) in &cycle {
                let arc = &mut self.arcs[k];
                if forward {
                    arc.flow += theta;
                } else {
                    arc.flow -= theta;
                }
            }
            // the leaving arc sits exactly at a bound
            let leaving_forward = cycle
                .iter()
                .find(|c| c.0 == leave)
                .map(|c| c.1)
                .unwrap_or(false);
            let arc = &mut self.arcs[leave];
            arc.flow = if leaving_forward { arc.upper } else { 0.0 };
            if leave != enter {
                self.in_tree[enter] = true;
                self.in_tree[leave] = false;
            }
        }
    }
}

/// Minimizes `sum c_k f_k` over flows on `arcs` (source index, sink index,
/// cost) meeting `supply` and `demand`.
pub(crate) fn transport_simplex(
    supply: &[f64],
    demand: &[f64],
    arcs: &[(usize, usize, f64)],
) -> Result<SimplexOutput> {
    let (m, n) = (supply.len(), demand.len());
    let root = m + n;
    let real = arcs.len();
    let mut all: Vec<Arc> = arcs
        .iter()
        .map(|&(i, j, _)| Arc {
            tail: i,
            head: m + j,
            cost: 0.0,
            upper: f64::INFINITY,
            flow: 0.0,
        })
        .collect();
    for (i, &w) in supply.iter().enumerate() {
        all.push(Arc {
            tail: i,
            head: root,
            cost: 1.0,
            upper: f64::INFINITY,
            flow: w,
        });
    }
    for (j, &w) in demand.iter().enumerate() {
        all.push(Arc {
            tail: root,
            head: m + j,
            cost: 1.0,
            upper: f64::INFINITY,
            flow: w,
        });
    }
    let mut in_tree = vec![false; all.len()];
    in_tree[real..].iter_mut().for_each(|b| *b = true);
    let nodes = m + n + 1;
    let mut net = Network {
        arcs: all,
        in_tree,
        nodes,
        root,
        parent: vec![usize::MAX; nodes],
        parent_arc: vec![usize::MAX; nodes],
        depth: vec![0; nodes],
        potential: vec![0.0; nodes],
    };

    let (p1, d1) = net.optimize(1e-12)?;
    let residual: f64 = net.arcs[real..].iter().map(|a| a.flow).sum();
    if residual > 1e-9 {
        return Err(Error::NotCausallyRelated);
    }

    let max_cost = arcs.iter().map(|a| a.2.abs()).fold(0.0, f64::max);
    for (k, a) in net.arcs.iter_mut().enumerate() {
        if k < real {
            a.cost = arcs[k].2;
        } else {
            a.cost = 0.0;
            a.upper = 0.0;
            a.flow = 0.0;
        }
    }
    let (p2, d2) = net.optimize(1e-12 * (1.0 + max_cost))?;
    net.rebuild_tree();

    Ok(SimplexOutput {
        flows: net.arcs[..real].iter().map(|a| a.flow.max(0.0)).collect(),
        source_duals: (0..m).map(|i| -net.potential[i]).collect(),
        target_duals: (0..n).map(|j| net.potential[m + j]).collect(),
        stats: PivotStats {
            phase1_pivots: p1,
            phase2_pivots: p2,
            degenerate_pivots: d1 + d2,
        },
    })
}
