//! Exact router rate by evolving the distribution over all `2^{N·m}` memory
//! configurations.
//!
//! A round is storage `σ` (every empty memory fills independently with
//! probability η) followed by the measurement map `μ`, which clears the
//! memories of the canonical maximum matching. `μ` is age-blind, so the
//! weighted strategies and cutoffs exist only in the simulator.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matching::Matcher;
use crate::memory::{low_bits, BitConfiguration};
use crate::params::{Params, ANALYTIC_MEMORY_LIMIT};

/// `Prob[C′ | C]` for the storage step: a product over memories of
/// `(1−η)(1−c′)(1−c) + η c′(1−c) + c′c`.
pub fn storage_transition(c: &BitConfiguration, c_prime: &BitConfiguration, eta: f64) -> f64 {
    (0..c.len())
        .map(|i| {
            let from = (c.mask() >> i & 1) as f64;
            let to = (c_prime.mask() >> i & 1) as f64;
            (1.0 - eta) * (1.0 - to) * (1.0 - from) + eta * to * (1.0 - from) + to * from
        })
        .product()
}

/// Apply the canonical maximum matching to `c_prime`: returns the cleared
/// configuration and the number of GHZ measurements `l`.
pub fn measurement_map(c_prime: &BitConfiguration, w: usize) -> Result<(BitConfiguration, usize)> {
    let mut matcher = Matcher::new(c_prime.n_parties(), c_prime.mem_per_party(), w);
    measure_with(&mut matcher, c_prime)
}

fn measure_with(matcher: &mut Matcher, c_prime: &BitConfiguration) -> Result<(BitConfiguration, usize)> {
    let matching = matcher.canonical(c_prime)?;
    let cleared = c_prime.mask() & !matching.mask(c_prime.mem_per_party());
    Ok((
        BitConfiguration::from_mask(c_prime.n_parties(), c_prime.mem_per_party(), cleared),
        matching.len(),
    ))
}

/// `Prob[Σ = l] = Σ_{i ≥ l} C(i, l) Prob[Λ = i] p^l (1−p)^{i−l}`.
pub fn prob_sigma(prob_lambda: &[f64], p_ghz: f64) -> Vec<f64> {
    let m = prob_lambda.len();
    let mut out = vec![0.0; m];
    for (i, &pl) in prob_lambda.iter().enumerate() {
        if pl == 0.0 {
            continue;
        }
        let mut binom = 1.0;
        for (l, slot) in out.iter_mut().enumerate().take(i + 1) {
            *slot += binom * pl * p_ghz.powi(l as i32) * (1.0 - p_ghz).powi((i - l) as i32);
            binom = binom * (i - l) as f64 / (l + 1) as f64;
        }
    }
    out
}

/// Mean number of successful GHZ measurements.
pub fn expected_l(prob_sigma: &[f64]) -> f64 {
    prob_sigma
        .iter()
        .enumerate()
        .map(|(l, p)| l as f64 * p)
        .sum()
}

fn variance_l(prob_sigma: &[f64]) -> f64 {
    let mean = expected_l(prob_sigma);
    let second: f64 = prob_sigma
        .iter()
        .enumerate()
        .map(|(l, p)| (l * l) as f64 * p)
        .sum();
    (second - mean * mean).max(0.0)
}

/// `R(s_c) = (1/s_c) Σ_{s=1}^{s_c} ⟨l⟩(s)/m`.
pub fn router_rate(l_series: &[f64], m: usize, s_c: usize) -> f64 {
    assert!(l_series.len() >= s_c && s_c > 0, "need at least s_c rounds");
    l_series[..s_c].iter().sum::<f64>() / (s_c as f64 * m as f64)
}

/// `R(s)` for every prefix of `l_series`.
pub fn router_rate_series(l_series: &[f64], m: usize) -> Vec<f64> {
    let mut acc = 0.0;
    l_series
        .iter()
        .enumerate()
        .map(|(i, l)| {
            acc += l;
            acc / ((i + 1) as f64 * m as f64)
        })
        .collect()
}

/// Probability of each configuration at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDistribution {
    pub n_parties: usize,
    pub mem_per_party: usize,
    pub probs: Vec<f64>,
    /// Number of completed rounds.
    pub round: usize,
}

impl ConfigDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob(&self, config: &BitConfiguration) -> f64 {
        self.probs[config.mask() as usize]
    }

    pub fn total_variation(&self, other: &ConfigDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    target: u32,
    l: u8,
    prob: f64,
}

/// Per-round output of the exact engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticRound {
    pub round: usize,
    pub prob_lambda: Vec<f64>,
    pub prob_sigma: Vec<f64>,
    pub expected_l: f64,
    /// Variance of the number of successful measurements in this round.
    pub variance_l: f64,
    pub router_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub expected_l: f64,
    /// Limit of `R(s_c)`, i.e. steady-state `⟨l⟩/m`.
    pub router_rate: f64,
    /// First round whose distribution moved by less than the tolerance, or
    /// `None` if that did not happen within the round budget.
    pub converged_round: Option<usize>,
}

/// Precomputed storage+measurement transitions for one parameter set.
#[derive(Debug, Clone)]
pub struct AnalyticEngine {
    n_parties: usize,
    mem_per_party: usize,
    p_ghz: f64,
    rows: Vec<Vec<Transition>>,
}

impl AnalyticEngine {
    /// Builds the transition table; refuses more than twelve memories in
    /// total unless `force` is set.
    pub fn new(params: &Params, force: bool) -> Result<Self> {
        params.validate()?;
        let total = params.total_memories();
        if total > ANALYTIC_MEMORY_LIMIT && !force {
            return Err(Error::DimensionTooLarge {
                got: total,
                limit: ANALYTIC_MEMORY_LIMIT,
            });
        }
        let (n, m, w, eta) = (
            params.n_parties,
            params.mem_per_party,
            params.max_conn_len,
            params.transmittivity,
        );
        let states = 1usize << total;

        let measure: Vec<(u64, u8)> = (0..states)
            .into_par_iter()
            .map_init(
                || Matcher::new(n, m, w),
                |matcher, mask| {
                    let c = BitConfiguration::from_mask(n, m, mask as u64);
                    let (after, l) = measure_with(matcher, &c).expect("canonical matching");
                    (after.mask(), l as u8)
                },
            )
            .collect();

        // Post-measurement configurations: nothing left to match.
        let rows = (0..states)
            .into_par_iter()
            .map(|mask| {
                if measure[mask].1 != 0 {
                    return Vec::new();
                }
                let empty = !(mask as u64) & low_bits(total);
                let k = empty.count_ones() as i32;
                let mut merged: Vec<Transition> = Vec::new();
                let mut sub = empty;
                loop {
                    // `sub` runs over every subset of the empty memories.
                    let added = sub.count_ones() as i32;
                    let prob = eta.powi(added) * (1.0 - eta).powi(k - added);
                    if prob > 0.0 {
                        let (target, l) = measure[mask | sub as usize];
                        match merged
                            .iter_mut()
                            .find(|t| t.target == target as u32 && t.l == l)
                        {
                            Some(t) => t.prob += prob,
                            None => merged.push(Transition {
                                target: target as u32,
                                l,
                                prob,
                            }),
                        }
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & empty;
                }
                merged
            })
            .collect();

        Ok(Self {
            n_parties: n,
            mem_per_party: m,
            p_ghz: params.p_ghz,
            rows,
        })
    }

    /// All memories empty.
    pub fn initial(&self) -> ConfigDistribution {
        let mut probs = vec![0.0; self.rows.len()];
        probs[0] = 1.0;
        ConfigDistribution {
            n_parties: self.n_parties,
            mem_per_party: self.mem_per_party,
            probs,
            round: 0,
        }
    }

    /// One round: returns the next start-of-round distribution and
    /// `Prob[Λ = l]` for `l = 0..=m`.
    pub fn evolve_round(&self, dist: &ConfigDistribution) -> (ConfigDistribution, Vec<f64>) {
        let mut next = vec![0.0; dist.probs.len()];
        let mut lambda = vec![0.0; self.mem_per_party + 1];
        for (from, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &self.rows[from];
            assert!(
                !row.is_empty(),
                "probability mass on a configuration that still admits a GHZ measurement"
            );
            for t in row {
                let q = p * t.prob;
                next[t.target as usize] += q;
                lambda[t.l as usize] += q;
            }
        }
        let total: f64 = next.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "distribution lost mass: {total}");
        (
            ConfigDistribution {
                n_parties: dist.n_parties,
                mem_per_party: dist.mem_per_party,
                probs: next,
                round: dist.round + 1,
            },
            lambda,
        )
    }

    /// Rounds `1..=rounds` starting from empty memories.
    pub fn run(&self, rounds: usize) -> Vec<AnalyticRound> {
        let mut dist = self.initial();
        let mut out = Vec::with_capacity(rounds);
        let mut l_sum = 0.0;
        for round in 1..=rounds {
            let (next, prob_lambda) = self.evolve_round(&dist);
            dist = next;
            let prob_sigma = prob_sigma(&prob_lambda, self.p_ghz);
            let expected = expected_l(&prob_sigma);
            l_sum += expected;
            out.push(AnalyticRound {
                round,
                variance_l: variance_l(&prob_sigma),
                expected_l: expected,
                router_rate: l_sum / (round as f64 * self.mem_per_party as f64),
                prob_lambda,
                prob_sigma,
            });
        }
        out
    }

    /// Iterate until successive distributions differ by less than `tol` in
    /// total variation (or `max_rounds` is reached).
    pub fn steady_state(&self, tol: f64, max_rounds: usize) -> SteadyState {
        let mut dist = self.initial();
        let mut converged_round = None;
        let mut last_lambda = vec![0.0; self.mem_per_party + 1];
        for round in 1..=max_rounds {
            let (next, lambda) = self.evolve_round(&dist);
            let moved = next.total_variation(&dist);
            dist = next;
            last_lambda = lambda;
            if moved < tol {
                converged_round = Some(round);
                break;
            }
        }
        let expected = expected_l(&prob_sigma(&last_lambda, self.p_ghz));
        SteadyState {
            expected_l: expected,
            router_rate: expected / self.mem_per_party as f64,
            converged_round,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(n: usize, m: usize, w: usize, eta: f64) -> Params {
        Params {
            n_parties: n,
            mem_per_party: m,
            max_conn_len: w,
            transmittivity: eta,
            ..Params::default()
        }
    }

    #[test]
    fn storage_transition_examples() {
        let empty = BitConfiguration::empty(3, 2);
        assert_abs_diff_eq!(storage_transition(&empty, &empty, 0.1), 0.531441, epsilon = 1e-15);
        let full = BitConfiguration::full(3, 2);
        assert_eq!(storage_transition(&full, &full, 0.1), 1.0);
        let one = BitConfiguration::from_mask(3, 2, 1);
        assert_eq!(storage_transition(&one, &empty, 0.1), 0.0);
    }

    #[test]
    fn storage_rows_are_stochastic() {
        let n = 2;
        let m = 3;
        for from in 0..64u64 {
            let c = BitConfiguration::from_mask(n, m, from);
            let total: f64 = (0..64u64)
                .map(|to| storage_transition(&c, &BitConfiguration::from_mask(n, m, to), 0.37))
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn measurement_map_examples() {
        let worked_example = BitConfiguration::from_party_strings(&["1010", "1101", "0011"]).unwrap();
        let (after, l) = measurement_map(&worked_example, 3).unwrap();
        assert_eq!(l, 2);
        assert_eq!((worked_example.mask() & !after.mask()).count_ones(), 6);
        for p in 0..3 {
            assert_eq!(worked_example.filled_count(p) - after.filled_count(p), 2);
        }
        let (after, l) = measurement_map(&worked_example, 0).unwrap();
        assert_eq!((after, l), (worked_example, 0));
        let empty = BitConfiguration::empty(3, 4);
        assert_eq!(measurement_map(&empty, 2).unwrap(), (empty, 0));
    }

    #[test]
    fn prob_sigma_examples() {
        let lambda = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(prob_sigma(&lambda, 1.0), lambda.to_vec());
        assert_eq!(prob_sigma(&lambda, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        let s = prob_sigma(&[0.0, 0.0, 1.0], 0.5);
        assert_eq!(s, vec![0.25, 0.5, 0.25]);
        assert_eq!(expected_l(&s), 1.0);
        assert_eq!(expected_l(&[0.0, 0.0, 1.0]), 2.0);
    }

    #[test]
    fn rate_helpers() {
        assert_eq!(router_rate(&[1.5; 10], 3, 10), 0.5);
        assert_eq!(router_rate_series(&[2.0, 0.0], 2), vec![1.0, 0.5]);
    }

    #[test]
    fn deterministic_filling_measures_everything() {
        let engine = AnalyticEngine::new(&params(3, 2, 1, 1.0), false).unwrap();
        for r in engine.run(5) {
            assert_eq!(r.prob_lambda, vec![0.0, 0.0, 1.0]);
            assert_eq!(r.router_rate, 1.0);
        }
    }

    #[test]
    fn no_transmission_stays_empty() {
        let engine = AnalyticEngine::new(&params(3, 2, 1, 0.0), false).unwrap();
        let rounds = engine.run(4);
        assert!(rounds.iter().all(|r| r.prob_lambda[0] == 1.0 && r.expected_l == 0.0));
        let ss = engine.steady_state(1e-10, 100);
        assert_eq!((ss.router_rate, ss.converged_round), (0.0, Some(1)));
    }

    #[test]
    fn two_parties_one_memory_first_round() {
        let eta = 0.3;
        let engine = AnalyticEngine::new(&params(2, 1, 0, eta), false).unwrap();
        let r = &engine.run(1)[0];
        assert_abs_diff_eq!(r.prob_lambda[1], eta * eta, epsilon = 1e-15);
    }

    #[test]
    fn dimension_guard() {
        let p = params(4, 4, 1, 0.1);
        assert!(matches!(
            AnalyticEngine::new(&p, false),
            Err(Error::DimensionTooLarge { got: 16, .. })
        ));
    }

    #[test]
    fn distributions_stay_normalised() {
        let engine = AnalyticEngine::new(&params(3, 3, 1, 0.2), false).unwrap();
        let mut dist = engine.initial();
        for _ in 0..30 {
            let (next, lambda) = engine.evolve_round(&dist);
            assert_abs_diff_eq!(next.total(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(lambda.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            dist = next;
        }
    }
}
