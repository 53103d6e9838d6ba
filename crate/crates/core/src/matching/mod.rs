//! Per-round hypergraph construction and maximum N-dimensional matching.
//!
//! A hyperedge takes one filled memory from every party; each B_i memory must
//! lie within `w` slot labels of the A memory. Solvers:
//!
//! * [`max_matching_parallel`] for `w = 0` (the matching is unique),
//! * [`max_matching_fullrange`] for `w = m − 1` (greedy, `l = min_k n_k`),
//! * [`max_matching_flow3`] for three parties (maximum flow),
//! * [`max_matching_bruteforce`] (combinations, largest first),
//! * [`max_matching_weighted`] for the age-aware strategies.
//!
//! [`Matcher`] picks the right one and keeps scratch buffers for the
//! simulator's inner loop.

mod flow;
mod search;

use std::fmt::Write as _;

use serde::Serialize;

pub use flow::max_matching_flow3;
pub use search::{candidate_subsets, max_matching_bruteforce, SEARCH_LIMIT};

use search::EdgeTable;

use crate::error::Result;
use crate::memory::{BitConfiguration, Hyperedge, Matching, MemoryState};
use crate::params::Strategy;

/// A round's hypergraph: the filled memories and every valid hyperedge.
#[derive(Debug, Clone)]
pub struct HypergraphInstance {
    pub config: BitConfiguration,
    pub w: usize,
    pub hyperedges: Vec<Hyperedge>,
}

impl HypergraphInstance {
    pub fn new(config: BitConfiguration, w: usize) -> Self {
        let hyperedges = enumerate_hyperedges(&config, w);
        Self {
            config,
            w,
            hyperedges,
        }
    }
}

/// All hyperedges of `config` under connection length `w`, sorted by
/// `(A slot, B₁ slot, …)`.
pub fn enumerate_hyperedges(config: &BitConfiguration, w: usize) -> Vec<Hyperedge> {
    let mut table = EdgeTable::new(config.n_parties(), config.mem_per_party());
    table.build(config.mask(), w);
    (0..table.len()).map(|i| table.hyperedge(i)).collect()
}

/// Bounds on the matching cardinality: `(min_k #{v ∈ V_k : deg v > 0}, min_k n_k)`
/// where `deg v` counts the hyperedges containing memory `v`.
///
/// The upper bound always holds. The lower bound holds on small instances but
/// not universally; see `lower_bound_counterexample` in the tests.
pub fn cardinality_bounds(config: &BitConfiguration, w: usize) -> (usize, usize) {
    let n = config.n_parties();
    let upper = upper_bound(config);
    let mut table = EdgeTable::new(n, config.mem_per_party());
    table.build(config.mask(), w);
    let covered = (0..table.len()).fold(0u64, |acc, i| acc | table.mask(i));
    let covered = BitConfiguration::from_mask(n, config.mem_per_party(), covered);
    let lower = (0..n).map(|k| covered.filled_count(k)).min().unwrap_or(0);
    (lower, upper)
}

fn upper_bound(config: &BitConfiguration) -> usize {
    (0..config.n_parties())
        .map(|k| config.filled_count(k))
        .min()
        .unwrap_or(0)
}

/// The unique matching for `w = 0`: every slot index filled in all parties.
pub fn max_matching_parallel(config: &BitConfiguration) -> Matching {
    let n = config.n_parties();
    let common = (0..n).fold(u64::MAX, |acc, p| acc & config.party_mask(p));
    Matching::new(
        (0..config.mem_per_party())
            .filter(|&s| common >> s & 1 == 1)
            .map(|s| Hyperedge::new(vec![s; n]))
            .collect(),
    )
}

/// Full-range matching: repeatedly join the lowest unused filled memory of
/// every party until one party runs out.
pub fn max_matching_fullrange(config: &BitConfiguration) -> Matching {
    let slots: Vec<Vec<usize>> = (0..config.n_parties())
        .map(|p| config.filled_slots(p).collect())
        .collect();
    let l = slots.iter().map(Vec::len).min().unwrap_or(0);
    Matching::new(
        (0..l)
            .map(|k| Hyperedge::new(slots.iter().map(|s| s[k]).collect()))
            .collect(),
    )
}

/// A hyperedge with its two age weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightedHyperedge {
    pub edge: Hyperedge,
    /// `Σ_i |δ_{b_i} − δ_a|`.
    pub w1: u64,
    /// `Σ` of all member ages.
    pub w2: u64,
}

impl WeightedHyperedge {
    pub fn new(edge: Hyperedge, ages: &MemoryState) -> Self {
        let (w1, w2) = edge_weights(edge.members.iter().copied(), ages);
        Self { edge, w1, w2 }
    }
}

fn edge_weights(members: impl Iterator<Item = usize>, ages: &MemoryState) -> (u64, u64) {
    let mut w1 = 0u64;
    let mut w2 = 0u64;
    let mut age_a = 0u64;
    for (party, slot) in members.enumerate() {
        let age = u64::from(ages.age(party, slot).unwrap_or(0));
        if party == 0 {
            age_a = age;
        } else {
            w1 += age.abs_diff(age_a);
        }
        w2 += age;
    }
    (w1, w2)
}

/// Maximum matching with the strategy's tie-break among all maximum
/// matchings: S0 canonical first, S1a min ΣW₁, S1b max ΣW₁, S2 min ΣW₂.
/// Remaining ties go to the lexicographically smallest matching.
pub fn max_matching_weighted(
    instance: &HypergraphInstance,
    ages: &MemoryState,
    strategy: Strategy,
) -> Result<Matching> {
    let config = &instance.config;
    let mut matcher = Matcher::new(config.n_parties(), config.mem_per_party(), instance.w);
    matcher.solve(config, Some(ages), strategy)
}

/// Strategy-aware solver with reusable buffers.
#[derive(Debug, Clone)]
pub struct Matcher {
    n_parties: usize,
    mem_per_party: usize,
    w: usize,
    table: EdgeTable,
    costs: Vec<u64>,
}

impl Matcher {
    pub fn new(n_parties: usize, mem_per_party: usize, w: usize) -> Self {
        Self {
            n_parties,
            mem_per_party,
            w,
            table: EdgeTable::new(n_parties, mem_per_party),
            costs: Vec::new(),
        }
    }

    /// Canonical (S0) maximum matching; this is the deterministic measurement
    /// map of the exact engine.
    pub fn canonical(&mut self, config: &BitConfiguration) -> Result<Matching> {
        self.solve(config, None, Strategy::S0)
    }

    /// Maximum-matching cardinality only.
    pub fn cardinality(&mut self, config: &BitConfiguration) -> Result<usize> {
        let m = self.mem_per_party;
        if self.w == 0 {
            return Ok(max_matching_parallel(config).len());
        }
        if self.w + 1 >= m {
            return Ok(upper_bound(config));
        }
        if self.n_parties == 3 {
            return Ok(max_matching_flow3(config, self.w)?.len());
        }
        self.table.build(config.mask(), self.w);
        Ok(self.table.max_lexmin(upper_bound(config))?.len())
    }

    pub fn solve(
        &mut self,
        config: &BitConfiguration,
        ages: Option<&MemoryState>,
        strategy: Strategy,
    ) -> Result<Matching> {
        debug_assert_eq!(config.n_parties(), self.n_parties);
        let m = self.mem_per_party;
        if self.w == 0 {
            return Ok(max_matching_parallel(config));
        }
        let weighted = match (ages, strategy) {
            (Some(ages), Strategy::S1a | Strategy::S1b | Strategy::S2) => Some(ages),
            _ => None,
        };
        let Some(ages) = weighted else {
            if self.w + 1 >= m {
                return Ok(max_matching_fullrange(config));
            }
            self.table.build(config.mask(), self.w);
            let picks = if self.n_parties == 3 {
                let l = max_matching_flow3(config, self.w)?.len();
                self.table.find_lexmin(l)?.unwrap_or_default()
            } else {
                self.table.max_lexmin(upper_bound(config))?
            };
            return Ok(self.table.matching(&picks));
        };

        let l = self.cardinality(config)?;
        self.table.build(config.mask(), self.w);
        self.costs.clear();
        for i in 0..self.table.len() {
            let (w1, w2) = edge_weights(
                self.table.members(i).iter().map(|&s| s as usize),
                ages,
            );
            self.costs.push(match strategy {
                Strategy::S1a | Strategy::S1b => w1,
                _ => w2,
            });
        }
        if strategy == Strategy::S1b {
            // Every candidate has exactly `l` edges, so maximising ΣW₁ is
            // minimising Σ(max − W₁).
            let top = self.costs.iter().copied().max().unwrap_or(0);
            for c in &mut self.costs {
                *c = top - *c;
            }
        }
        let picks = self
            .table
            .min_cost(l, &self.costs)?
            .map(|(_, picks)| picks)
            .unwrap_or_default();
        Ok(self.table.matching(&picks))
    }
}

/// Text listing of an instance: every filled memory with the memories it may
/// connect to, then the hyperedges and the canonical maximum matching.
pub fn adjacency_listing(config: &BitConfiguration, w: usize) -> Result<String> {
    let n = config.n_parties();
    let party_name = |p: usize| {
        if p == 0 {
            "A".to_string()
        } else {
            format!("B{p}")
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "configuration {config}  (N={n}, m={}, w={w})", config.mem_per_party());
    for p in 0..n {
        for s in config.filled_slots(p) {
            let partners: Vec<String> = if p == 0 {
                (1..n)
                    .flat_map(|b| {
                        config
                            .filled_slots(b)
                            .filter(move |t| t.abs_diff(s) <= w)
                            .map(move |t| format!("{}:{}", party_name(b), t + 1))
                    })
                    .collect()
            } else {
                config
                    .filled_slots(0)
                    .filter(|t| t.abs_diff(s) <= w)
                    .map(|t| format!("A:{}", t + 1))
                    .collect()
            };
            let _ = writeln!(out, "{} {} -> [{}]", party_name(p), s + 1, partners.join(", "));
        }
    }
    let edges = enumerate_hyperedges(config, w);
    let listed: Vec<String> = edges.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "hyperedges (A, B1, ...): {}", listed.join(" "));
    let (lower, upper) = cardinality_bounds(config, w);
    let matching = Matcher::new(n, config.mem_per_party(), w).canonical(config)?;
    let _ = writeln!(out, "bounds: {lower} <= l <= {upper}");
    let _ = writeln!(out, "maximum matching (l = {}): {matching}", matching.len());
    Ok(out)
}
