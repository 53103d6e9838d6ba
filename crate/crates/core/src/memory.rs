//! Router memory in its two representations: per-slot qubit ages for the
//! simulator and a filled/empty bit vector for the exact engine.
//!
//! Slots are indexed party-major. Party 0 is A for the whole run, parties
//! `1..N` are B₁ … B_{N−1}. Internally slots are 0-based; [`fmt::Display`]
//! output is 1-based.

use std::fmt;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};

/// Filled/empty flags of all `N·m` memories, bit `party * m + slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitConfiguration {
    n_parties: usize,
    mem_per_party: usize,
    mask: u64,
}

impl BitConfiguration {
    pub fn empty(n_parties: usize, mem_per_party: usize) -> Self {
        Self::from_mask(n_parties, mem_per_party, 0)
    }

    pub fn full(n_parties: usize, mem_per_party: usize) -> Self {
        Self::from_mask(n_parties, mem_per_party, low_bits(n_parties * mem_per_party))
    }

    pub fn from_mask(n_parties: usize, mem_per_party: usize, mask: u64) -> Self {
        debug_assert!(n_parties * mem_per_party <= 64);
        Self {
            n_parties,
            mem_per_party,
            mask: mask & low_bits(n_parties * mem_per_party),
        }
    }

    /// Build from the concatenated flag vector `(a, b₁, …, b_{N−1})`.
    pub fn from_bits(n_parties: usize, mem_per_party: usize, bits: &[u8]) -> Result<Self> {
        let expected = n_parties * mem_per_party;
        if bits.len() != expected {
            return Err(Error::ConfigLength {
                expected,
                got: bits.len(),
            });
        }
        let mask = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .fold(0u64, |acc, (i, _)| acc | 1 << i);
        Ok(Self::from_mask(n_parties, mem_per_party, mask))
    }

    /// Build from one `0`/`1` string per party, e.g. `["1010", "1101", "0011"]`.
    pub fn from_party_strings<S: AsRef<str>>(parties: &[S]) -> Result<Self> {
        let m = parties.first().map_or(0, |p| p.as_ref().trim().len());
        let mut bits = Vec::with_capacity(parties.len() * m);
        for party in parties {
            let party = party.as_ref().trim();
            if party.len() != m {
                return Err(Error::ConfigLength {
                    expected: parties.len() * m,
                    got: parties.len() * party.len(),
                });
            }
            for c in party.chars() {
                bits.push(match c {
                    '0' => 0,
                    '1' => 1,
                    _ => {
                        return Err(Error::Config {
                            line: 0,
                            message: format!("memory flag `{c}` is not 0 or 1"),
                        })
                    }
                });
            }
        }
        Self::from_bits(parties.len(), m, &bits)
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn mem_per_party(&self) -> usize {
        self.mem_per_party
    }

    pub fn len(&self) -> usize {
        self.n_parties * self.mem_per_party
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Index of this configuration among all `2^{N·m}` configurations.
    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn is_filled(&self, party: usize, slot: usize) -> bool {
        self.mask >> (party * self.mem_per_party + slot) & 1 == 1
    }

    pub fn set(&mut self, party: usize, slot: usize, filled: bool) {
        let bit = 1u64 << (party * self.mem_per_party + slot);
        if filled {
            self.mask |= bit;
        } else {
            self.mask &= !bit;
        }
    }

    /// The `m` flags of one party, slot 0 in bit 0.
    pub fn party_mask(&self, party: usize) -> u64 {
        self.mask >> (party * self.mem_per_party) & low_bits(self.mem_per_party)
    }

    pub fn filled_count(&self, party: usize) -> usize {
        self.party_mask(party).count_ones() as usize
    }

    pub fn filled_slots(&self, party: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.mem_per_party).filter(move |&s| self.is_filled(party, s))
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len()).map(|i| (self.mask >> i & 1) as u8).collect()
    }
}

impl fmt::Display for BitConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for party in 0..self.n_parties {
            if party > 0 {
                f.write_str(" ")?;
            }
            for slot in 0..self.mem_per_party {
                f.write_str(if self.is_filled(party, slot) { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

pub(crate) fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Per-slot qubit ages. `None` is an empty memory, `Some(δ)` a qubit that
/// has survived `δ` round boundaries since it was stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemoryState {
    n_parties: usize,
    mem_per_party: usize,
    slots: Vec<Option<u32>>,
}

impl MemoryState {
    pub fn empty(n_parties: usize, mem_per_party: usize) -> Self {
        Self {
            n_parties,
            mem_per_party,
            slots: vec![None; n_parties * mem_per_party],
        }
    }

    /// One age array per party; all parties must have the same length.
    pub fn from_ages(parties: &[Vec<Option<u32>>]) -> Result<Self> {
        let m = parties.first().map_or(0, Vec::len);
        let slots: Vec<_> = parties.iter().flatten().copied().collect();
        if parties.iter().any(|p| p.len() != m) {
            return Err(Error::ConfigLength {
                expected: parties.len() * m,
                got: slots.len(),
            });
        }
        Ok(Self {
            n_parties: parties.len(),
            mem_per_party: m,
            slots,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn mem_per_party(&self) -> usize {
        self.mem_per_party
    }

    pub fn age(&self, party: usize, slot: usize) -> Option<u32> {
        self.slots[party * self.mem_per_party + slot]
    }

    pub fn set(&mut self, party: usize, slot: usize, age: Option<u32>) {
        self.slots[party * self.mem_per_party + slot] = age;
    }

    /// Flat party-major view.
    pub fn slots(&self) -> &[Option<u32>] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Option<u32>] {
        &mut self.slots
    }

    pub fn party(&self, party: usize) -> &[Option<u32>] {
        &self.slots[party * self.mem_per_party..(party + 1) * self.mem_per_party]
    }

    pub fn to_bit_configuration(&self) -> BitConfiguration {
        to_bit_configuration(self)
    }
}

/// Bit `i` is set iff flat slot `i` holds a qubit.
pub fn to_bit_configuration(state: &MemoryState) -> BitConfiguration {
    let mask = state
        .slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some())
        .fold(0u64, |acc, (i, _)| acc | 1 << i);
    BitConfiguration::from_mask(state.n_parties, state.mem_per_party, mask)
}

impl fmt::Display for MemoryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for party in 0..self.n_parties {
            if party > 0 {
                f.write_str(" | ")?;
            }
            let cells: Vec<String> = self
                .party(party)
                .iter()
                .map(|s| s.map_or_else(|| "-".to_string(), |a| a.to_string()))
                .collect();
            f.write_str(&cells.join(","))?;
        }
        Ok(())
    }
}

/// Serialises as one array per party with `"EMPTY"` for empty slots.
impl Serialize for MemoryState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Cell {
            Age(u32),
            Empty(&'static str),
        }
        let mut seq = serializer.serialize_seq(Some(self.n_parties))?;
        for party in 0..self.n_parties {
            let cells: Vec<Cell> = self
                .party(party)
                .iter()
                .map(|s| s.map_or(Cell::Empty("EMPTY"), Cell::Age))
                .collect();
            seq.serialize_element(&cells)?;
        }
        seq.end()
    }
}

/// One candidate GHZ measurement: a slot index for every party, A first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Hyperedge {
    pub members: Vec<usize>,
}

impl Hyperedge {
    pub fn new(members: Vec<usize>) -> Self {
        Self { members }
    }

    pub fn a_slot(&self) -> usize {
        self.members[0]
    }

    /// 1-based slot labels, A first.
    pub fn labels(&self) -> Vec<usize> {
        self.members.iter().map(|s| s + 1).collect()
    }

    /// Occupancy bits of the member slots in a [`BitConfiguration`] mask.
    pub fn mask(&self, mem_per_party: usize) -> u64 {
        self.members
            .iter()
            .enumerate()
            .fold(0, |acc, (party, &slot)| acc | 1 << (party * mem_per_party + slot))
    }
}

impl fmt::Display for Hyperedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels().iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

/// Pairwise disjoint hyperedges, kept in canonical (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Matching {
    pub edges: Vec<Hyperedge>,
}

impl Matching {
    pub fn new(mut edges: Vec<Hyperedge>) -> Self {
        edges.sort();
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// No slot appears in two hyperedges.
    pub fn is_disjoint(&self, mem_per_party: usize) -> bool {
        let mut used = 0u64;
        for e in &self.edges {
            let m = e.mask(mem_per_party);
            if used & m != 0 {
                return false;
            }
            used |= m;
        }
        true
    }

    pub fn mask(&self, mem_per_party: usize) -> u64 {
        self.edges.iter().fold(0, |acc, e| acc | e.mask(mem_per_party))
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", edges.join(", "))
    }
}
