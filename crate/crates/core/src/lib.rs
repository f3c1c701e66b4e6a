//! Workbench for studying distribution shift in RL traffic signal control.
//!
//! The pipeline: generate shifted traffic scenarios ([`scenario`]), measure
//! the shift as a KL distance between movement shares ([`metrics`]), train
//! FRAP++ Q-networks with DQN ([`nn`], [`dqn`]) or meta-train and adapt them
//! with first-order MetaLight ([`meta`]), and evaluate everything on a
//! point-queue intersection simulator ([`sim`], [`eval`]).

pub mod dqn;
pub mod error;
pub mod eval;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod settings;
pub mod sim;

pub use error::{Error, Result};
