use std::collections::BTreeMap;

use crate::alphabet::{MaskedSequence, Token};
use crate::classifier::{bce_loss, clamp_prediction, trained_step, Denoiser, DenoiserOutput, Learner, TrainExample};
use crate::error::{GgmError, Result};

/// Laplace pseudo-count added to both outcomes.
pub const LAPLACE_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct TabularKey {
    pub t: u32,
    pub position: u32,
    /// Row-major index of `x_{-i}` over `V^(L−1)`.
    pub context: u64,
    pub token: u32,
}

/// Event counts per `(t, masked context, revealed token)`; predicts
/// `(n₁ + α)/(n₀ + n₁ + 2α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    vocab: usize,
    len: usize,
    horizon: usize,
    counts: BTreeMap<TabularKey, [u64; 2]>,
}

impl TabularModel {
    pub fn new(vocab: usize, len: usize, horizon: usize) -> Result<Self> {
        if vocab == 0 || len == 0 {
            return Err(GgmError::InvalidInput("tabular model needs V ≥ 1 and L ≥ 1".into()));
        }
        Ok(Self { vocab, len, horizon, counts: BTreeMap::new() })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `(n₀, n₁)` for a key, zero if unseen.
    pub fn counts_for(&self, masked: &MaskedSequence, t: usize, token: Token) -> [u64; 2] {
        self.counts.get(&self.key(masked, t, token)).copied().unwrap_or([0, 0])
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&TabularKey, &[u64; 2])> {
        self.counts.iter()
    }

    pub(crate) fn from_entries(
        vocab: usize,
        len: usize,
        horizon: usize,
        entries: impl IntoIterator<Item = (TabularKey, [u64; 2])>,
    ) -> Result<Self> {
        let mut model = Self::new(vocab, len, horizon)?;
        model.counts = entries.into_iter().collect();
        Ok(model)
    }

    pub(crate) fn encode_context(&self, masked: &MaskedSequence) -> u64 {
        let position = masked.masked_position();
        masked
            .entries()
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != position)
            .fold(0u64, |acc, (_, &tok)| acc * self.vocab as u64 + tok as u64)
    }

    fn key(&self, masked: &MaskedSequence, t: usize, token: Token) -> TabularKey {
        TabularKey {
            t: t as u32,
            position: masked.masked_position() as u32,
            context: self.encode_context(masked),
            token,
        }
    }

    fn estimate(&self, key: &TabularKey) -> f64 {
        let [n0, n1] = self.counts.get(key).copied().unwrap_or([0, 0]);
        (n1 as f64 + LAPLACE_ALPHA) / ((n0 + n1) as f64 + 2.0 * LAPLACE_ALPHA)
    }
}

impl Denoiser for TabularModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput> {
        if masked.len() != self.len {
            return Err(GgmError::ShapeMismatch(format!("expected length {}, got {}", self.len, masked.len())));
        }
        let t = trained_step(t, self.horizon, self.len);
        let y_hat = (0..self.vocab as Token).map(|a| self.estimate(&self.key(masked, t, a))).collect();
        DenoiserOutput::new(y_hat)
    }
}

impl Learner for TabularModel {
    fn update(&mut self, example: &TrainExample) -> f64 {
        let key = self.key(&example.masked, example.t, example.revealed);
        let loss = bce_loss(clamp_prediction(self.estimate(&key)), example.label).expect("clamped");
        self.counts.entry(key).or_insert([0, 0])[example.label as usize] += 1;
        loss
    }
}
