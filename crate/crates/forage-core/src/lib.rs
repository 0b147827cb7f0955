//! ForageWorld: a partially observable survival gridworld, a recurrent PPO
//! trainer, and the analysis toolkit used to study what trained agents do and
//! what their hidden states encode.
//!
//! The crate is organized around a deterministic, replayable trajectory log:
//! every stochastic subsystem draws from named counter-based RNG streams, so
//! any episode can be re-simulated bit-exactly from its seed and action
//! sequence. Analyses (position decoding, revisitation GLMs, behavioral
//! metrics) consume only the logs.

pub mod behavior;
pub mod config;
pub mod decoding;
pub mod env;
pub mod error;
pub mod net;
pub mod ppo;
pub mod rng;
pub mod telemetry;
pub mod worldgen;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use rng::RngStream;
