//! Simulation and analysis of a star network whose central quantum router
//! holds `m` multiplexed memories per party and distributes GHZ states.
//!
//! * [`matching`]: per-round hypergraph and maximum N-dimensional matching.
//! * [`analytic`]: exact router rate from the configuration Markov chain.
//! * [`sim`]: Monte Carlo protocol simulation with strategies and cutoffs.
//! * [`noise`] and [`keyrate`]: memory decoherence, post-measurement GHZ
//!   diagonal state, QBERs, secret fraction and key rate.

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod keyrate;
pub mod matching;
pub mod memory;
pub mod noise;
pub mod output;
pub mod oracle;
pub mod params;
pub mod sim;

pub use error::{Error, Result};
pub use memory::{to_bit_configuration, BitConfiguration, Hyperedge, Matching, MemoryState};
pub use params::{Params, Strategy};
