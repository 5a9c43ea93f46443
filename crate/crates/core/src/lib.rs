//! Stern-Gerlach wave-packet model: closed-form packets, idealness metrics,
//! outcome probabilities, a split-step PDE cross-check and a Monte Carlo
//! screen sampler.

pub mod cli;
pub mod config;
pub mod error;
pub mod idealness;
pub mod montecarlo;
pub mod pde_oracle;
pub mod probabilities;
pub mod specialfn;
pub mod wavepacket;

pub use config::{Preset, SGConfig, SpinAmplitudes};
pub use error::{Error, Result};
pub use wavepacket::SpinLabel;
