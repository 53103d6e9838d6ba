//! Tripartite matching as unit-capacity maximum flow.
//!
//! Layers: source → B₁ → A → A′ → B₂ → sink. Each A slot is split into A and
//! its copy A′ joined by a single unit arc, so an A memory carries at most one
//! unit of flow and therefore sits in at most one hyperedge.

use crate::error::{Error, Result};
use crate::memory::{BitConfiguration, Hyperedge, Matching};

struct FlowNetwork {
    head: Vec<Option<usize>>,
    next: Vec<Option<usize>>,
    to: Vec<usize>,
    residual: Vec<i32>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![None; nodes],
            next: Vec::new(),
            to: Vec::new(),
            residual: Vec::new(),
        }
    }

    /// Arc `u → v` and its reverse; returns the forward arc id.
    fn link(&mut self, u: usize, v: usize, cap: i32) -> usize {
        let id = self.to.len();
        for (from, dest, c) in [(u, v, cap), (v, u, 0)] {
            self.to.push(dest);
            self.residual.push(c);
            self.next.push(self.head[from]);
            self.head[from] = Some(self.to.len() - 1);
        }
        id
    }

    fn augment(&mut self, u: usize, sink: usize, seen: &mut [bool]) -> bool {
        if u == sink {
            return true;
        }
        seen[u] = true;
        let mut arc = self.head[u];
        while let Some(e) = arc {
            let v = self.to[e];
            if self.residual[e] > 0 && !seen[v] && self.augment(v, sink, seen) {
                self.residual[e] -= 1;
                self.residual[e ^ 1] += 1;
                return true;
            }
            arc = self.next[e];
        }
        false
    }

    /// Ford–Fulkerson with depth-first augmenting paths; all capacities are 1.
    fn max_flow(&mut self, source: usize, sink: usize) -> usize {
        let mut flow = 0;
        let mut seen = vec![false; self.head.len()];
        loop {
            seen.fill(false);
            if !self.augment(source, sink, &mut seen) {
                return flow;
            }
            flow += 1;
        }
    }

    fn carries_flow(&self, arc: usize) -> bool {
        self.residual[arc] == 0
    }
}

/// Maximum 3-dimensional matching via maximum flow. Returned hyperedges are
/// `(A, B₁, B₂)` slot triples.
pub fn max_matching_flow3(config: &BitConfiguration, w: usize) -> Result<Matching> {
    if config.n_parties() != 3 {
        return Err(Error::FlowNeedsThreeParties(config.n_parties()));
    }
    let m = config.mem_per_party();
    let source = 0;
    let b1 = |j: usize| 1 + j;
    let a = |i: usize| 1 + m + i;
    let a_copy = |i: usize| 1 + 2 * m + i;
    let b2 = |k: usize| 1 + 3 * m + k;
    let sink = 1 + 4 * m;
    let mut net = FlowNetwork::new(sink + 1);

    for j in config.filled_slots(1) {
        net.link(source, b1(j), 1);
    }
    let mut b1_arcs = Vec::new();
    let mut b2_arcs = Vec::new();
    let mut split_arcs = Vec::new();
    for i in config.filled_slots(0) {
        for j in config.filled_slots(1).filter(|&j| j.abs_diff(i) <= w) {
            b1_arcs.push((j, i, net.link(b1(j), a(i), 1)));
        }
        split_arcs.push((i, net.link(a(i), a_copy(i), 1)));
        for k in config.filled_slots(2).filter(|&k| k.abs_diff(i) <= w) {
            b2_arcs.push((i, k, net.link(a_copy(i), b2(k), 1)));
        }
    }
    for k in config.filled_slots(2) {
        net.link(b2(k), sink, 1);
    }

    let flow = net.max_flow(source, sink);

    let mut edges = Vec::with_capacity(flow);
    for &(i, split) in &split_arcs {
        if !net.carries_flow(split) {
            continue;
        }
        let j = b1_arcs
            .iter()
            .find(|&&(_, ai, arc)| ai == i && net.carries_flow(arc))
            .map(|&(j, _, _)| j);
        let k = b2_arcs
            .iter()
            .find(|&&(ai, _, arc)| ai == i && net.carries_flow(arc))
            .map(|&(_, k, _)| k);
        if let (Some(j), Some(k)) = (j, k) {
            edges.push(Hyperedge::new(vec![i, j, k]));
        }
    }
    debug_assert_eq!(edges.len(), flow);
    Ok(Matching::new(edges))
}
