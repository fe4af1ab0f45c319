//! Discrete-event simulator of a millimetre-wave sidelink between two
//! platooning vehicles: stochastic channel, link-abstraction PHY, slot MAC
//! with optional HARQ, RLC unacknowledged mode with reordering, and a Monte
//! Carlo sweep harness.

pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod mac;
pub mod phy;
pub mod rlc;
pub mod sim;
pub mod traffic;

pub use config::{expand_sweep, parse_config, split_seed, SimConfig, SweepSpec};
pub use engine::SimTime;
pub use error::{Error, Result};
