//! Noise distributions over `X ∪ {φ}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Token;
use crate::error::{GgmError, Result};
use crate::sampling::sample_categorical;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Outcome of one noise draw `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseDraw {
    /// `φ`: the scheduled position keeps its token.
    Stay,
    /// A token drawn from `Π_t(·|X)` that overwrites the scheduled position.
    Token(Token),
}

impl NoiseDraw {
    pub fn token(self) -> Option<Token> {
        match self {
            NoiseDraw::Stay => None,
            NoiseDraw::Token(t) => Some(t),
        }
    }
}

/// `Π_t`: stay probability `Π_t(φ)` plus the conditional token law `Π_t(·|X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDistribution {
    stay_prob: f64,
    token_probs: Vec<f64>,
}

impl NoiseDistribution {
    pub fn new(stay_prob: f64, token_probs: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&stay_prob) {
            return Err(GgmError::InvalidInput(format!("stay probability {stay_prob} not in [0, 1]")));
        }
        if token_probs.is_empty() {
            return Err(GgmError::InvalidInput("token distribution is empty".into()));
        }
        if token_probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GgmError::InvalidInput("token probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = token_probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(GgmError::NotNormalized { sum, tol: NORMALIZATION_TOL });
        }
        Ok(Self { stay_prob, token_probs })
    }

    pub fn uniform(vocab: usize, stay_prob: f64) -> Result<Self> {
        if vocab == 0 {
            return Err(GgmError::InvalidInput("vocabulary must be non-empty".into()));
        }
        Self::new(stay_prob, vec![1.0 / vocab as f64; vocab])
    }

    pub fn stay_prob(&self) -> f64 {
        self.stay_prob
    }

    /// `Π_t(·|X)`.
    pub fn token_probs(&self) -> &[f64] {
        &self.token_probs
    }

    pub fn vocab_size(&self) -> usize {
        self.token_probs.len()
    }

    /// Unconditional mass `Π_t(a) = (1 − Π_t(φ))·Π_t(a|X)`.
    pub fn token_mass(&self, token: Token) -> f64 {
        (1.0 - self.stay_prob) * self.token_probs[token as usize]
    }

    /// `p = 1 − Π(φ)`.
    pub fn redraw_prob(&self) -> f64 {
        1.0 - self.stay_prob
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseDraw {
        if rng.gen::<f64>() < self.stay_prob {
            NoiseDraw::Stay
        } else {
            NoiseDraw::Token(self.draw_token(rng))
        }
    }

    /// Draws from `Π_t(·|X)` alone.
    pub fn draw_token<R: Rng + ?Sized>(&self, rng: &mut R) -> Token {
        sample_categorical(&self.token_probs, rng) as Token
    }
}

/// Unigram construction of `Π`: token law `n_a / N`, stay probability as given.
pub fn build_unigram_noise(counts: &[u64], stay_prob: f64) -> Result<NoiseDistribution> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(GgmError::InvalidInput("unigram counts are all zero".into()));
    }
    let token_probs = counts.iter().map(|&n| n as f64 / total as f64).collect();
    NoiseDistribution::new(stay_prob, token_probs)
}

/// The per-step noise laws `Π_0, …, Π_{T-1}` (and `Π_T` for initialization).
///
/// Lookups past the last stored step reuse the last entry, so a single-entry
/// sequence is a time-constant `Π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSequence {
    steps: Vec<NoiseDistribution>,
}

impl NoiseSequence {
    pub fn constant(noise: NoiseDistribution) -> Self {
        Self { steps: vec![noise] }
    }

    pub fn per_step(steps: Vec<NoiseDistribution>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return Err(GgmError::InvalidInput("noise sequence is empty".into()));
        };
        let vocab = first.vocab_size();
        if steps.iter().any(|s| s.vocab_size() != vocab) {
            return Err(GgmError::ShapeMismatch("noise steps disagree on vocabulary size".into()));
        }
        Ok(Self { steps })
    }

    pub fn at(&self, t: usize) -> &NoiseDistribution {
        &self.steps[t.min(self.steps.len() - 1)]
    }

    pub fn vocab_size(&self) -> usize {
        self.steps[0].vocab_size()
    }

    /// Largest stay probability over steps `0..horizon`.
    pub fn max_stay_prob(&self, horizon: usize) -> f64 {
        (0..horizon.max(1)).map(|t| self.at(t).stay_prob()).fold(0.0, f64::max)
    }

    /// Whether `Π_s(·|X)` is identical for every `s ≤ t`.
    pub fn token_law_constant_through(&self, t: usize) -> bool {
        let first = self.at(0).token_probs();
        (0..=t.min(self.steps.len() - 1)).all(|s| self.at(s).token_probs() == first)
    }
}
