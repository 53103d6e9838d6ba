//! Exact maximum-matching search over a compact hyperedge table.
//!
//! Hyperedges are stored as occupancy masks in canonical order (A slot, then
//! B₁ slot, …). A depth-first walk over index combinations in lexicographic
//! order, pruned by disjointness and a per-party availability bound, finds
//! the lexicographically smallest matching of a given size; the weighted
//! variant adds branch-and-bound on an additive edge weight.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::memory::{low_bits, Hyperedge, Matching};

use super::HypergraphInstance;

/// Refuse exhaustive searches beyond this many candidate subsets / search nodes.
pub const SEARCH_LIMIT: u128 = 5_000_000;

#[derive(Debug, Clone)]
pub(crate) struct EdgeTable {
    n_parties: usize,
    mem_per_party: usize,
    party_bits: Vec<u64>,
    members: Vec<u8>,
    masks: Vec<u64>,
    /// First index whose A slot differs from this edge's.
    next_a: Vec<usize>,
    /// Union of masks from index i to the end; one extra trailing zero.
    suffix: Vec<u64>,
    scratch: Vec<u8>,
}

impl EdgeTable {
    pub fn new(n_parties: usize, mem_per_party: usize) -> Self {
        let party_bits = (0..n_parties)
            .map(|p| low_bits(mem_per_party) << (p * mem_per_party))
            .collect();
        Self {
            n_parties,
            mem_per_party,
            party_bits,
            members: Vec::new(),
            masks: Vec::new(),
            next_a: Vec::new(),
            suffix: Vec::new(),
            scratch: vec![0; n_parties],
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn mask(&self, idx: usize) -> u64 {
        self.masks[idx]
    }

    pub fn members(&self, idx: usize) -> &[u8] {
        &self.members[idx * self.n_parties..(idx + 1) * self.n_parties]
    }

    pub fn hyperedge(&self, idx: usize) -> Hyperedge {
        Hyperedge::new(self.members(idx).iter().map(|&s| s as usize).collect())
    }

    pub fn matching(&self, picks: &[usize]) -> Matching {
        Matching::new(picks.iter().map(|&i| self.hyperedge(i)).collect())
    }

    /// Enumerate every valid hyperedge of `config_mask` in canonical order.
    pub fn build(&mut self, config_mask: u64, w: usize) {
        self.members.clear();
        self.masks.clear();
        let m = self.mem_per_party;
        let party_slots: Vec<u64> = (0..self.n_parties)
            .map(|p| config_mask >> (p * m) & low_bits(m))
            .collect();
        let mut a_bits = party_slots[0];
        while a_bits != 0 {
            let a = a_bits.trailing_zeros() as usize;
            a_bits &= a_bits - 1;
            let lo = a.saturating_sub(w);
            let hi = (a + w).min(m - 1);
            let window = low_bits(hi + 1) & !low_bits(lo);
            self.scratch[0] = a as u8;
            self.extend(&party_slots, window, 1, 1u64 << a);
        }
        let len = self.masks.len();
        self.next_a.clear();
        self.next_a.resize(len, len);
        let mut i = 0;
        while i < len {
            let a = self.members[i * self.n_parties];
            let mut j = i;
            while j < len && self.members[j * self.n_parties] == a {
                j += 1;
            }
            self.next_a[i..j].fill(j);
            i = j;
        }
        self.suffix.clear();
        self.suffix.resize(len + 1, 0);
        for i in (0..len).rev() {
            self.suffix[i] = self.suffix[i + 1] | self.masks[i];
        }
    }

    fn extend(&mut self, party_slots: &[u64], window: u64, party: usize, mask: u64) {
        if party == self.n_parties {
            self.members.extend_from_slice(&self.scratch);
            self.masks.push(mask);
            return;
        }
        let mut bits = party_slots[party] & window;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            self.scratch[party] = b as u8;
            let bit = 1u64 << (party * self.mem_per_party + b);
            self.extend(party_slots, window, party + 1, mask | bit);
        }
    }

    /// How many more disjoint edges could still be added from index `start`.
    fn availability(&self, start: usize, used: u64) -> usize {
        let free = self.suffix[start] & !used;
        self.party_bits
            .iter()
            .map(|&p| (free & p).count_ones() as usize)
            .min()
            .unwrap_or(0)
    }

    /// Lexicographically smallest disjoint subset of exactly `size` edges.
    pub fn find_lexmin(&self, size: usize) -> Result<Option<Vec<usize>>> {
        let mut walk = Walk::new(self, size, None);
        walk.feasible(0, 0, size)?;
        Ok(walk.found)
    }

    /// Lexicographically smallest matching of maximum cardinality, searching
    /// downwards from `upper`.
    pub fn max_lexmin(&self, upper: usize) -> Result<Vec<usize>> {
        for size in (1..=upper.min(self.len())).rev() {
            if let Some(found) = self.find_lexmin(size)? {
                return Ok(found);
            }
        }
        Ok(Vec::new())
    }

    /// Among disjoint subsets of exactly `size` edges, the one with minimal
    /// summed `costs` (non-negative), ties broken lexicographically.
    pub fn min_cost(&self, size: usize, costs: &[u64]) -> Result<Option<(u64, Vec<usize>)>> {
        if size == 0 {
            return Ok(Some((0, Vec::new())));
        }
        let mut suffix_min = vec![u64::MAX; self.len() + 1];
        for i in (0..self.len()).rev() {
            suffix_min[i] = suffix_min[i + 1].min(costs[i]);
        }
        let mut walk = Walk::new(self, size, Some((costs, suffix_min)));
        walk.weighted(0, 0, size, 0)?;
        Ok(walk.best)
    }
}

struct Walk<'a> {
    table: &'a EdgeTable,
    stack: Vec<usize>,
    found: Option<Vec<usize>>,
    costs: Option<(&'a [u64], Vec<u64>)>,
    best: Option<(u64, Vec<usize>)>,
    nodes: u128,
}

impl<'a> Walk<'a> {
    fn new(table: &'a EdgeTable, size: usize, costs: Option<(&'a [u64], Vec<u64>)>) -> Self {
        Self {
            table,
            stack: Vec::with_capacity(size),
            found: None,
            costs,
            best: None,
            nodes: 0,
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > SEARCH_LIMIT {
            return Err(Error::InstanceTooLarge {
                candidates: self.nodes,
                limit: SEARCH_LIMIT,
            });
        }
        Ok(())
    }

    fn feasible(&mut self, start: usize, used: u64, need: usize) -> Result<bool> {
        if need == 0 {
            self.found = Some(self.stack.clone());
            return Ok(true);
        }
        let t = self.table;
        let mut i = start;
        while i < t.len() {
            if t.availability(i, used) < need {
                return Ok(false);
            }
            if t.masks[i] & used == 0 {
                self.tick()?;
                self.stack.push(i);
                if self.feasible(t.next_a[i], used | t.masks[i], need - 1)? {
                    return Ok(true);
                }
                self.stack.pop();
            }
            i += 1;
        }
        Ok(false)
    }

    fn weighted(&mut self, start: usize, used: u64, need: usize, cost: u64) -> Result<()> {
        if need == 0 {
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.stack.clone()));
            }
            return Ok(());
        }
        let t = self.table;
        let mut i = start;
        while i < t.len() {
            if t.availability(i, used) < need {
                return Ok(());
            }
            let (costs, suffix_min) = self.costs.as_ref().expect("weighted walk without costs");
            if let Some((best, _)) = &self.best {
                // Later completions are lexicographically larger, so equal cost cannot win.
                if cost + suffix_min[i] * need as u64 >= *best {
                    return Ok(());
                }
            }
            if t.masks[i] & used == 0 {
                let c = costs[i];
                self.tick()?;
                self.stack.push(i);
                self.weighted(t.next_a[i], used | t.masks[i], need - 1, cost + c)?;
                self.stack.pop();
            }
            i += 1;
        }
        Ok(())
    }
}

/// Number of subsets of size `1..=max_size` drawn from `n` edges, saturating.
pub fn candidate_subsets(n: usize, max_size: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 1..=max_size.min(n) {
        binom = binom.saturating_mul((n - k + 1) as u128) / k as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Consider all combinations of hyperedges, largest first, in lexicographic
/// order, and return the first pairwise-disjoint one.
pub fn max_matching_bruteforce(instance: &HypergraphInstance) -> Result<Matching> {
    let edges = &instance.hyperedges;
    let m = instance.config.mem_per_party();
    let upper = super::cardinality_bounds(&instance.config, instance.w).1;
    let candidates = candidate_subsets(edges.len(), upper);
    if candidates > SEARCH_LIMIT {
        return Err(Error::InstanceTooLarge {
            candidates,
            limit: SEARCH_LIMIT,
        });
    }
    let masks: Vec<u64> = edges.iter().map(|e| e.mask(m)).collect();
    for size in (1..=upper.min(edges.len())).rev() {
        for combo in (0..edges.len()).combinations(size) {
            let mut used = 0u64;
            let disjoint = combo.iter().all(|&i| {
                let ok = used & masks[i] == 0;
                used |= masks[i];
                ok
            });
            if disjoint {
                return Ok(Matching::new(combo.iter().map(|&i| edges[i].clone()).collect()));
            }
        }
    }
    Ok(Matching::default())
}
