//! Glauber generative models on finite sequence spaces.
//!
//! A forward chain noises one scheduled position per step; a learned
//! signal-vs-noise classifier is inverted into the conditional laws of the
//! reverse chain, which generates by resampling one position per step.
//! Small state spaces can be enumerated, so every kernel also has an exact
//! table-propagation counterpart used for certification.

pub mod alphabet;
pub mod analysis;
pub mod baseline;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod forward;
pub mod joint;
pub mod noise;
pub mod reverse;
pub mod rng;
pub mod sampling;
pub mod schedule;

pub use alphabet::{MaskedSequence, Token, TokenAlphabet, TokenSequence, OMEGA, PHI};
pub use error::{GgmError, Result};
pub use joint::JointDistribution;
pub use noise::{NoiseDistribution, NoiseDraw, NoiseSequence};
pub use rng::RngStream;
pub use schedule::ScanSchedule;
