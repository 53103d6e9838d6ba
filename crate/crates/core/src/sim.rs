//! Round-based Monte Carlo simulation of the multiplexing protocol.
//!
//! Every round: storage (each empty memory receives a qubit with probability
//! η) → maximum matching under the chosen strategy → GHZ measurements, each
//! succeeding with probability `p_ghz` → measured memories cleared whether or
//! not the measurement succeeded → surviving qubits age by one round →
//! qubits older than the cutoff are discarded.
//!
//! Each sample draws from its own ChaCha stream selected by the sample index,
//! and every round consumes a fixed number of draws (one per memory for
//! storage, one per possible measurement). Runs with different strategies or
//! cutoffs therefore see the same arrivals, and results do not depend on how
//! samples are spread over threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::matching::Matcher;
use crate::memory::{Matching, MemoryState};
use crate::params::Params;

/// Samples per work unit of the ensemble.
const CHUNK: usize = 500;

/// Successful GHZ measurements of one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub num_measurements: usize,
    /// Size of the matching, i.e. measurements attempted.
    pub attempted: usize,
    /// `(δ_a, δ_{b1}, …)` per successful measurement.
    pub age_tuples: Vec<Vec<u32>>,
}

/// Random stream of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fill each empty memory with a fresh qubit (age 0) with probability `eta`.
/// One draw is consumed per memory, filled or not.
pub fn step_storage<R: Rng + ?Sized>(state: &mut MemoryState, eta: f64, rng: &mut R) {
    for slot in state.slots_mut() {
        let arrived = rng.gen_bool(eta);
        if slot.is_none() && arrived {
            *slot = Some(0);
        }
    }
}

/// Drop every qubit whose age exceeds `cutoff`.
pub fn step_cutoff(state: &mut MemoryState, cutoff: Option<u32>) {
    if let Some(cutoff) = cutoff {
        for slot in state.slots_mut() {
            if slot.is_some_and(|age| age > cutoff) {
                *slot = None;
            }
        }
    }
}

/// Round boundary: age every stored qubit, then apply the cutoff.
pub fn end_of_round(state: &mut MemoryState, cutoff: Option<u32>) {
    for age in state.slots_mut().iter_mut().flatten() {
        *age += 1;
    }
    step_cutoff(state, cutoff);
}

/// Measure the strategy's maximum matching. Matched memories are cleared;
/// the record lists the ages of successful measurements only.
pub fn step_measure<R: Rng + ?Sized>(
    state: &mut MemoryState,
    params: &Params,
    matcher: &mut Matcher,
    round: usize,
    rng: &mut R,
) -> Result<RoundRecord> {
    let mut tuples = Vec::new();
    let matching = measure(state, params, matcher, rng, |ages| tuples.push(ages.to_vec()))?;
    Ok(RoundRecord {
        round,
        num_measurements: tuples.len(),
        attempted: matching.len(),
        age_tuples: tuples,
    })
}

fn measure<R: Rng + ?Sized>(
    state: &mut MemoryState,
    params: &Params,
    matcher: &mut Matcher,
    rng: &mut R,
    mut on_success: impl FnMut(&[u32]),
) -> Result<Matching> {
    let config = state.to_bit_configuration();
    let matching = matcher.solve(&config, Some(state), params.strategy)?;
    let mut ages = vec![0u32; params.n_parties];
    for k in 0..params.mem_per_party {
        let success = rng.gen_bool(params.p_ghz);
        let Some(edge) = matching.edges.get(k) else {
            continue;
        };
        for (party, &slot) in edge.members.iter().enumerate() {
            ages[party] = state.age(party, slot).expect("matched memory is filled");
            state.set(party, slot, None);
        }
        if success {
            on_success(&ages);
        }
    }
    Ok(matching)
}

/// One protocol run of `params.total_rounds` rounds from empty memories.
pub fn run_protocol<R: Rng + ?Sized>(params: &Params, rng: &mut R) -> Result<Vec<RoundRecord>> {
    params.validate()?;
    let mut state = MemoryState::empty(params.n_parties, params.mem_per_party);
    let mut matcher = Matcher::new(params.n_parties, params.mem_per_party, params.max_conn_len);
    let mut records = Vec::with_capacity(params.total_rounds);
    for round in 1..=params.total_rounds {
        step_storage(&mut state, params.transmittivity, rng);
        records.push(step_measure(&mut state, params, &mut matcher, round, rng)?);
        end_of_round(&mut state, params.cutoff);
    }
    Ok(records)
}

/// Aggregated statistics of many protocol runs. All accumulators are
/// integer counts, so merging is exact and order-independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleStats {
    pub n_parties: usize,
    pub mem_per_party: usize,
    pub rounds: usize,
    pub samples: u64,
    /// Per round: Σ successes, Σ successes², Σ attempted measurements.
    pub sum_l: Vec<u64>,
    pub sum_l_sq: Vec<u64>,
    pub sum_attempted: Vec<u64>,
    /// Per round: Σ over samples of (successes up to and including this round)².
    pub sum_cum_l_sq: Vec<u128>,
    /// `[round][party][age]` counts of qubits consumed by successful measurements.
    pub age_hist: Vec<Vec<Vec<u64>>>,
    /// Per round: packed age tuple → count.
    pub joint: Vec<BTreeMap<u128, u64>>,
    /// Largest age seen in memory at any round boundary.
    pub max_stored_age: u32,
}

/// Ages are packed 16 bits per party, party A in the lowest bits.
pub fn pack_ages(ages: &[u32]) -> u128 {
    ages.iter()
        .enumerate()
        .fold(0u128, |acc, (p, &a)| acc | u128::from(a as u16) << (16 * p))
}

pub fn unpack_ages(key: u128, n_parties: usize) -> Vec<u32> {
    (0..n_parties)
        .map(|p| (key >> (16 * p) & 0xffff) as u32)
        .collect()
}

impl EnsembleStats {
    pub fn new(n_parties: usize, mem_per_party: usize, rounds: usize) -> Self {
        Self {
            n_parties,
            mem_per_party,
            rounds,
            samples: 0,
            sum_l: vec![0; rounds],
            sum_l_sq: vec![0; rounds],
            sum_attempted: vec![0; rounds],
            sum_cum_l_sq: vec![0; rounds],
            age_hist: (0..rounds).map(|r| vec![vec![0; r + 1]; n_parties]).collect(),
            joint: vec![BTreeMap::new(); rounds],
            max_stored_age: 0,
        }
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        assert_eq!(
            (self.n_parties, self.mem_per_party, self.rounds),
            (other.n_parties, other.mem_per_party, other.rounds),
            "merging statistics of different experiments"
        );
        self.samples += other.samples;
        for r in 0..self.rounds {
            self.sum_l[r] += other.sum_l[r];
            self.sum_l_sq[r] += other.sum_l_sq[r];
            self.sum_attempted[r] += other.sum_attempted[r];
            self.sum_cum_l_sq[r] += other.sum_cum_l_sq[r];
            for (mine, theirs) in self.age_hist[r].iter_mut().zip(&other.age_hist[r]) {
                for (a, b) in mine.iter_mut().zip(theirs) {
                    *a += b;
                }
            }
            for (&key, &count) in &other.joint[r] {
                *self.joint[r].entry(key).or_insert(0) += count;
            }
        }
        self.max_stored_age = self.max_stored_age.max(other.max_stored_age);
    }

    /// `⟨l⟩(s)` for `s = 1..=rounds`.
    pub fn mean_l(&self) -> Vec<f64> {
        self.sum_l
            .iter()
            .map(|&s| s as f64 / self.samples as f64)
            .collect()
    }

    /// Standard error of `⟨l⟩(s)` from the sample variance.
    pub fn mean_l_stderr(&self) -> Vec<f64> {
        let n = self.samples as f64;
        self.sum_l
            .iter()
            .zip(&self.sum_l_sq)
            .map(|(&s, &sq)| stderr(s as f64, sq as f64, n))
            .collect()
    }

    /// Mean attempted measurements per round (before GHZ success).
    pub fn mean_attempted(&self) -> Vec<f64> {
        self.sum_attempted
            .iter()
            .map(|&s| s as f64 / self.samples as f64)
            .collect()
    }

    pub fn router_rate(&self) -> Vec<f64> {
        crate::analytic::router_rate_series(&self.mean_l(), self.mem_per_party)
    }

    /// Standard error of `R(s)`, from the per-sample cumulative counts.
    pub fn router_rate_stderr(&self) -> Vec<f64> {
        let n = self.samples as f64;
        let mut cum = 0u64;
        (0..self.rounds)
            .map(|r| {
                cum += self.sum_l[r];
                let scale = (r + 1) as f64 * self.mem_per_party as f64;
                stderr(cum as f64, self.sum_cum_l_sq[r] as f64, n) / scale
            })
            .collect()
    }

    /// `Prob[δ_party](s)` over ages `0..=s−1`, normalised over successful
    /// measurements of that round; all zeros when nothing was measured.
    pub fn age_marginal(&self, round: usize, party: usize) -> Vec<f64> {
        let hist = &self.age_hist[round - 1][party];
        let total: u64 = hist.iter().sum();
        hist.iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    /// Age tuples measured in `round` (1-based) with their counts.
    pub fn joint_tuples(&self, round: usize) -> impl Iterator<Item = (Vec<u32>, u64)> + '_ {
        self.joint[round - 1]
            .iter()
            .map(move |(&k, &c)| (unpack_ages(k, self.n_parties), c))
    }

    fn record(&mut self, round: usize, ages: &[u32]) {
        let r = round - 1;
        for (party, &age) in ages.iter().enumerate() {
            self.age_hist[r][party][age as usize] += 1;
        }
        *self.joint[r].entry(pack_ages(ages)).or_insert(0) += 1;
    }
}

fn stderr(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Run samples `start..end` into one statistics block.
fn run_range(params: &Params, start: usize, end: usize) -> Result<EnsembleStats> {
    let (n, m) = (params.n_parties, params.mem_per_party);
    let mut stats = EnsembleStats::new(n, m, params.total_rounds);
    let mut matcher = Matcher::new(n, m, params.max_conn_len);
    let mut state = MemoryState::empty(n, m);
    for index in start..end {
        let mut rng = sample_rng(params.rng_seed, index as u64);
        state.slots_mut().fill(None);
        let mut cumulative = 0u64;
        for round in 1..=params.total_rounds {
            step_storage(&mut state, params.transmittivity, &mut rng);
            let mut successes = 0u64;
            let matching = measure(&mut state, params, &mut matcher, &mut rng, |ages| {
                successes += 1;
                stats.record(round, ages);
            })?;
            let r = round - 1;
            cumulative += successes;
            stats.sum_l[r] += successes;
            stats.sum_l_sq[r] += successes * successes;
            stats.sum_attempted[r] += matching.len() as u64;
            stats.sum_cum_l_sq[r] += u128::from(cumulative * cumulative);
            end_of_round(&mut state, params.cutoff);
            if let Some(oldest) = state.slots().iter().flatten().max() {
                stats.max_stored_age = stats.max_stored_age.max(*oldest);
            }
        }
        stats.samples += 1;
    }
    Ok(stats)
}

fn run_samples(params: &Params, start: usize, end: usize) -> Result<EnsembleStats> {
    params.validate()?;
    let chunks: Vec<(usize, usize)> = (start..end)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(end)))
        .collect();
    let blocks: Vec<EnsembleStats> = chunks
        .into_par_iter()
        .map(|(s, e)| run_range(params, s, e))
        .collect::<Result<_>>()?;
    let mut stats = EnsembleStats::new(params.n_parties, params.mem_per_party, params.total_rounds);
    for block in &blocks {
        stats.merge(block);
    }
    Ok(stats)
}

/// `params.samples` independent protocol runs.
pub fn run_ensemble(params: &Params) -> Result<EnsembleStats> {
    run_samples(params, 0, params.samples)
}

/// The same samples as [`run_ensemble`], split into `batches` contiguous
/// groups (for batch-means error estimates). Merging the batches gives
/// exactly the [`run_ensemble`] result.
pub fn run_ensemble_batches(params: &Params, batches: usize) -> Result<Vec<EnsembleStats>> {
    let batches = batches.clamp(1, params.samples.max(1));
    (0..batches)
        .map(|b| {
            let start = b * params.samples / batches;
            let end = (b + 1) * params.samples / batches;
            run_samples(params, start, end)
        })
        .collect()
}
