//! Experiment parameters and the flat `key = value` config format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Largest number of memories for which the analytic engine runs without `force`.
pub const ANALYTIC_MEMORY_LIMIT: usize = 12;

/// Hard limits of the in-memory representations (one `u64` occupancy mask,
/// 16-bit ages packed into a `u128` per measured tuple).
pub const MAX_PARTIES: usize = 8;
pub const MAX_TOTAL_MEMORIES: usize = 64;
pub const MAX_ROUNDS: usize = u16::MAX as usize;

/// Fiber attenuation in dB/km of standard telecom fiber at 1550 nm.
pub const FIBER_ATTENUATION_DB_PER_KM: f64 = 0.2;

/// Tie-breaking rule among maximum matchings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// First maximum matching in canonical order.
    S0,
    /// Minimise the summed age differences to party A.
    S1a,
    /// Maximise the summed age differences to party A.
    S1b,
    /// Minimise the summed ages.
    S2,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::S0, Strategy::S1a, Strategy::S1b, Strategy::S2];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::S0 => "S0",
            Strategy::S1a => "S1a",
            Strategy::S1b => "S1b",
            Strategy::S2 => "S2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s0" => Ok(Strategy::S0),
            "s1a" => Ok(Strategy::S1a),
            "s1b" => Ok(Strategy::S1b),
            "s2" => Ok(Strategy::S2),
            other => Err(format!("unknown strategy `{other}` (expected S0, S1a, S1b or S2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("n_parties must be at least 2, got {0}")]
    TooFewParties(usize),
    #[error("n_parties must be at most {MAX_PARTIES}, got {0}")]
    TooManyParties(usize),
    #[error("mem_per_party must be at least 1")]
    NoMemories,
    #[error("n_parties * mem_per_party = {0} exceeds {MAX_TOTAL_MEMORIES}")]
    TooManyMemories(usize),
    #[error("w exceeds m−1 (w = {w}, m = {m})")]
    ConnectionLength { w: usize, m: usize },
    #[error("transmittivity out of [0,1]: {0}")]
    Transmittivity(f64),
    #[error("p_ghz out of [0,1]: {0}")]
    PGhz(f64),
    #[error("decoherence_rounds must be a positive integer")]
    Decoherence,
    #[error("cutoff must be a positive integer")]
    Cutoff,
    #[error("total_rounds must be in 1..={MAX_ROUNDS}, got {0}")]
    Rounds(usize),
    #[error("samples must be at least 1")]
    Samples,
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n_parties: usize,
    pub mem_per_party: usize,
    pub max_conn_len: usize,
    pub transmittivity: f64,
    pub decoherence_rounds: u32,
    pub p_ghz: f64,
    pub strategy: Strategy,
    pub cutoff: Option<u32>,
    pub total_rounds: usize,
    pub samples: usize,
    pub rng_seed: u64,
}

impl Default for Params {
    /// Tripartite router with four memories per party and `w = 1` at 50 km.
    fn default() -> Self {
        Self {
            n_parties: 3,
            mem_per_party: 4,
            max_conn_len: 1,
            transmittivity: 0.1,
            decoherence_rounds: 100,
            p_ghz: 1.0,
            strategy: Strategy::S2,
            cutoff: None,
            total_rounds: 50,
            samples: 50_000,
            rng_seed: 42,
        }
    }
}

pub const CONFIG_KEYS: [&str; 11] = [
    "n_parties",
    "mem_per_party",
    "max_conn_len",
    "transmittivity",
    "decoherence_rounds",
    "p_ghz",
    "strategy",
    "cutoff",
    "total_rounds",
    "samples",
    "rng_seed",
];

impl Params {
    pub fn total_memories(&self) -> usize {
        self.n_parties * self.mem_per_party
    }

    /// Every violated invariant, in field order.
    pub fn errors(&self) -> Vec<ParamError> {
        let mut errors = Vec::new();
        if self.n_parties < 2 {
            errors.push(ParamError::TooFewParties(self.n_parties));
        }
        if self.n_parties > MAX_PARTIES {
            errors.push(ParamError::TooManyParties(self.n_parties));
        }
        if self.mem_per_party == 0 {
            errors.push(ParamError::NoMemories);
        } else if self.max_conn_len >= self.mem_per_party {
            errors.push(ParamError::ConnectionLength {
                w: self.max_conn_len,
                m: self.mem_per_party,
            });
        }
        if self.total_memories() > MAX_TOTAL_MEMORIES {
            errors.push(ParamError::TooManyMemories(self.total_memories()));
        }
        if !(0.0..=1.0).contains(&self.transmittivity) {
            errors.push(ParamError::Transmittivity(self.transmittivity));
        }
        if self.decoherence_rounds == 0 {
            errors.push(ParamError::Decoherence);
        }
        if !(0.0..=1.0).contains(&self.p_ghz) {
            errors.push(ParamError::PGhz(self.p_ghz));
        }
        if self.cutoff == Some(0) {
            errors.push(ParamError::Cutoff);
        }
        if self.total_rounds == 0 || self.total_rounds > MAX_ROUNDS {
            errors.push(ParamError::Rounds(self.total_rounds));
        }
        if self.samples == 0 {
            errors.push(ParamError::Samples);
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Non-fatal findings. The exact engine is exponential in `N·m`.
    pub fn warnings(&self, analytic: bool) -> Vec<String> {
        let mut warnings = Vec::new();
        if analytic && self.total_memories() > ANALYTIC_MEMORY_LIMIT {
            warnings.push(format!(
                "{} memories in total: the analytic engine tracks 2^{} configurations and becomes infeasible above {}",
                self.total_memories(),
                self.total_memories(),
                ANALYTIC_MEMORY_LIMIT
            ));
        }
        if analytic && self.strategy != Strategy::S0 {
            warnings.push(format!(
                "strategy {} ignored: the analytic engine always measures the S0 matching",
                self.strategy
            ));
        }
        if analytic && self.cutoff.is_some() {
            warnings.push("cutoff ignored: the analytic engine keeps qubits indefinitely".into());
        }
        warnings
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse `{value}` as a number for `{key}`"))
        }
        match key.trim() {
            "n_parties" => self.n_parties = num(key, value)?,
            "mem_per_party" => self.mem_per_party = num(key, value)?,
            "max_conn_len" => self.max_conn_len = num(key, value)?,
            "transmittivity" => self.transmittivity = num(key, value)?,
            "decoherence_rounds" => self.decoherence_rounds = num(key, value)?,
            "p_ghz" => self.p_ghz = num(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "cutoff" => {
                self.cutoff = match value.to_ascii_lowercase().as_str() {
                    "" | "none" | "inf" | "off" => None,
                    v => Some(num(key, v)?),
                }
            }
            "total_rounds" => self.total_rounds = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut params = Params::default();
        params.apply_config_str(text)?;
        Ok(params)
    }

    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|message| Error::Config {
                line: idx + 1,
                message,
            })?;
        }
        Ok(())
    }

    pub fn value_of(&self, key: &str) -> Option<String> {
        Some(match key {
            "n_parties" => self.n_parties.to_string(),
            "mem_per_party" => self.mem_per_party.to_string(),
            "max_conn_len" => self.max_conn_len.to_string(),
            "transmittivity" => self.transmittivity.to_string(),
            "decoherence_rounds" => self.decoherence_rounds.to_string(),
            "p_ghz" => self.p_ghz.to_string(),
            "strategy" => self.strategy.to_string(),
            "cutoff" => self
                .cutoff
                .map_or_else(|| "none".to_string(), |c| c.to_string()),
            "total_rounds" => self.total_rounds.to_string(),
            "samples" => self.samples.to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            _ => return None,
        })
    }

    /// Serialise in the config-file format, one key per line in canonical order.
    pub fn to_config_string(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|key| format!("{key} = {}\n", self.value_of(key).unwrap_or_default()))
            .collect()
    }

    /// Single-line `key=value` listing used in output headers.
    pub fn summary(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|key| format!("{key}={}", self.value_of(key).unwrap_or_default()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Party–router fiber length (km) that yields transmittivity `eta`
/// for an attenuation of `alpha` dB/km.
pub fn fiber_distance_km(eta: f64, alpha: f64) -> f64 {
    -10.0 / alpha * eta.log10()
}
