//! Total QBERs and secret key rate curves from simulated age statistics.
//!
//! `Q^tot(s_c) = Σ_{s ≤ s_c} ⟨l⟩(s)·Q̄(s) / Σ_{s ≤ s_c} ⟨l⟩(s)`, where `Q̄(s)`
//! averages the QBER over the qubits measured in round s. Joint mode takes
//! that average over the recorded age tuples. Marginal mode replaces the
//! tuple distribution by the product of the per-party age marginals.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{lambdas_unchecked, qbers_3, secret_fraction, white_noise_prob, Fidelities, QberSet};
use crate::oracle::{circuit_qbers, ORACLE_MAX_PARTIES};
use crate::sim::EnsembleStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QberMode {
    Joint,
    Marginal,
}

impl QberMode {
    pub const ALL: [QberMode; 2] = [QberMode::Joint, QberMode::Marginal];

    pub fn as_str(self) -> &'static str {
        match self {
            QberMode::Joint => "joint",
            QberMode::Marginal => "marginal",
        }
    }
}

impl fmt::Display for QberMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QberMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(QberMode::Joint),
            "marginal" => Ok(QberMode::Marginal),
            _ => Err(format!("unknown QBER mode {s:?} (expected joint or marginal)")),
        }
    }
}

/// QBERs as a function of storage ages. Three parties use the closed-form
/// GHZ-diagonal weights. Other party counts evaluate the circuit at the
/// corners `p_i ∈ {0, 1}` once and interpolate: the output state is linear
/// in each party's input state, hence multilinear in the noise parameters.
#[derive(Debug, Clone)]
pub struct QberModel {
    n_parties: usize,
    tau: u32,
    p_table: Vec<f64>,
    corners: Option<Vec<QberSet>>,
}

impl QberModel {
    /// `max_age` sizes the `e^{−δ/τ}` lookup table; larger ages are computed on demand.
    pub fn new(n_parties: usize, tau: u32, max_age: u32) -> Result<Self> {
        if !(2..=ORACLE_MAX_PARTIES).contains(&n_parties) {
            return Err(Error::UnsupportedPartyCount(n_parties));
        }
        let corners = if n_parties == 3 {
            None
        } else {
            let corners = (0..1usize << n_parties)
                .map(|c| {
                    let f = (0..n_parties)
                        .map(|i| if c >> i & 1 == 1 { 1.0 } else { 0.25 })
                        .collect();
                    circuit_qbers(&Fidelities { f })
                })
                .collect::<Result<_>>()?;
            Some(corners)
        };
        Ok(Self {
            n_parties,
            tau,
            p_table: (0..=max_age).map(|d| white_noise_prob(d, tau)).collect(),
            corners,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn noise_param(&self, age: u32) -> f64 {
        self.p_table
            .get(age as usize)
            .copied()
            .unwrap_or_else(|| white_noise_prob(age, self.tau))
    }

    pub fn at_ages(&self, ages: &[u32]) -> QberSet {
        let p: Vec<f64> = ages.iter().map(|&a| self.noise_param(a)).collect();
        self.at_noise(&p)
    }

    /// QBERs for per-party white-noise parameters `p_i ∈ [0, 1]`.
    pub fn at_noise(&self, p: &[f64]) -> QberSet {
        assert_eq!(p.len(), self.n_parties, "one noise parameter per party");
        match &self.corners {
            None => {
                let f: Vec<f64> = p.iter().map(|&x| 0.25 + 0.75 * x).collect();
                qbers_3(&lambdas_unchecked(f[0], f[1], f[2]))
            }
            Some(corners) => QberSet::weighted_sum(
                self.n_parties - 1,
                corners.iter().enumerate().map(|(c, q)| {
                    let weight: f64 = p
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if c >> i & 1 == 1 { x } else { 1.0 - x })
                        .product();
                    (weight, q)
                }),
            ),
        }
    }
}

/// `⟨l⟩(s)·Q̄(s)` per round.
fn round_terms(stats: &EnsembleStats, model: &QberModel, mode: QberMode) -> Vec<QberSet> {
    let n_b = stats.n_parties - 1;
    let samples = stats.samples as f64;
    (1..=stats.rounds)
        .map(|round| match mode {
            QberMode::Joint => {
                let tuples: Vec<(Vec<u32>, u64)> = stats.joint_tuples(round).collect();
                let qs: Vec<QberSet> = tuples.iter().map(|(ages, _)| model.at_ages(ages)).collect();
                QberSet::weighted_sum(
                    n_b,
                    tuples.iter().zip(&qs).map(|((_, c), q)| (*c as f64 / samples, q)),
                )
            }
            QberMode::Marginal => {
                let mean_l = stats.sum_l[round - 1] as f64 / samples;
                let marginals: Vec<Vec<f64>> = (0..stats.n_parties)
                    .map(|p| stats.age_marginal(round, p))
                    .collect();
                let q = if mean_l == 0.0 {
                    QberSet { q_x: 0.0, q_ab: vec![0.0; n_b] }
                } else if stats.n_parties == 3 {
                    marginal_sum_3(model, &marginals)
                } else {
                    marginal_mean_noise(model, &marginals)
                };
                QberSet::weighted_sum(n_b, [(mean_l, &q)])
            }
        })
        .collect()
}

/// `Σ_{δ_a, δ_b₁, δ_b₂} Q(δ) Prob[δ_a] Prob[δ_b₁] Prob[δ_b₂]`.
pub fn marginal_sum_3(model: &QberModel, marginals: &[Vec<f64>]) -> QberSet {
    let support = |m: &Vec<f64>| -> Vec<(u32, f64)> {
        m.iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(d, &x)| (d as u32, x))
            .collect()
    };
    let (sa, s1, s2) = (support(&marginals[0]), support(&marginals[1]), support(&marginals[2]));
    let mut terms = Vec::with_capacity(sa.len() * s1.len() * s2.len());
    for &(da, pa) in &sa {
        for &(d1, p1) in &s1 {
            for &(d2, p2) in &s2 {
                terms.push((pa * p1 * p2, model.at_ages(&[da, d1, d2])));
            }
        }
    }
    QberSet::weighted_sum(2, terms.iter().map(|(w, q)| (*w, q)))
}

/// Product-of-marginals average of a multilinear function: evaluate at the
/// per-party mean noise parameter.
pub fn marginal_mean_noise(model: &QberModel, marginals: &[Vec<f64>]) -> QberSet {
    let p: Vec<f64> = marginals
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .map(|(d, &x)| x * model.noise_param(d as u32))
                .sum()
        })
        .collect();
    model.at_noise(&p)
}

/// `Q^tot(s_c)` for every `s_c`; `None` while no measurement has succeeded.
pub fn total_qber(stats: &EnsembleStats, tau: u32, mode: QberMode) -> Result<Vec<Option<QberSet>>> {
    let model = QberModel::new(stats.n_parties, tau, stats.rounds as u32)?;
    Ok(accumulate(stats, &round_terms(stats, &model, mode)))
}

fn accumulate(stats: &EnsembleStats, terms: &[QberSet]) -> Vec<Option<QberSet>> {
    let n_b = stats.n_parties - 1;
    let mean_l = stats.mean_l();
    let mut num = QberSet { q_x: 0.0, q_ab: vec![0.0; n_b] };
    let mut den = 0.0;
    terms
        .iter()
        .zip(&mean_l)
        .map(|(term, &l)| {
            num = QberSet::weighted_sum(n_b, [(1.0, &num), (1.0, term)]);
            den += l;
            (den > 0.0).then(|| QberSet::weighted_sum(n_b, [(1.0 / den, &num)]))
        })
        .collect()
}

/// One point of a key-rate curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRatePoint {
    pub round: usize,
    /// `None` until the first successful measurement.
    pub qber: Option<QberSet>,
    pub secret_fraction: Option<f64>,
    pub router_rate: f64,
    /// `r_∞ · R`; zero while `R` is zero.
    pub key_rate: f64,
}

pub fn key_rate_curve(stats: &EnsembleStats, tau: u32, mode: QberMode) -> Result<Vec<KeyRatePoint>> {
    let qbers = total_qber(stats, tau, mode)?;
    Ok(qbers
        .into_iter()
        .zip(stats.router_rate())
        .enumerate()
        .map(|(r, (qber, router_rate))| {
            let r_inf = qber.as_ref().map(secret_fraction);
            KeyRatePoint {
                round: r + 1,
                secret_fraction: r_inf,
                router_rate,
                key_rate: r_inf.map_or(0.0, |x| x * router_rate),
                qber,
            }
        })
        .collect())
}

/// Successful measurements in which no qubit was fresh (all ages > 0), and
/// the total number of successful measurements.
pub fn stale_measurements(stats: &EnsembleStats) -> (u64, u64) {
    let mut stale = 0;
    let mut total = 0;
    for round in 1..=stats.rounds {
        for (ages, count) in stats.joint_tuples(round) {
            total += count;
            if ages.iter().all(|&a| a > 0) {
                stale += count;
            }
        }
    }
    (stale, total)
}
