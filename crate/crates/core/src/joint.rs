//! Dense probability tables over `X^L`.
//!
//! States are indexed row-major with position 0 most significant:
//! `index(x) = Σ_k x_k · V^(L−1−k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Token, TokenAlphabet, TokenSequence};
use crate::error::{GgmError, Result};

/// Default bound on `V^L` for exact enumeration.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

/// Tolerance on `Σ probs − 1` accepted at construction.
pub const JOINT_NORMALIZATION_TOL: f64 = 1e-10;

/// `V^L`, or an error if it overflows or exceeds `cap`.
pub fn state_count(vocab: usize, len: usize, cap: usize) -> Result<usize> {
    let exceeded = GgmError::CapExceeded { vocab, len, cap };
    let n = u32::try_from(len)
        .ok()
        .and_then(|l| vocab.checked_pow(l))
        .ok_or_else(|| GgmError::CapExceeded { vocab, len, cap })?;
    if n > cap {
        return Err(exceeded);
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    len: usize,
    vocab: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointFile {
    #[serde(rename = "L")]
    len: usize,
    #[serde(rename = "V")]
    vocab: usize,
    probs: Vec<f64>,
}

impl Serialize for JointDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        JointFile { len: self.len, vocab: self.vocab, probs: self.probs.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JointDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = JointFile::deserialize(deserializer)?;
        JointDistribution::new(file.len, file.vocab, file.probs).map_err(serde::de::Error::custom)
    }
}

impl JointDistribution {
    pub fn new(len: usize, vocab: usize, probs: Vec<f64>) -> Result<Self> {
        Self::with_cap(len, vocab, probs, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(len: usize, vocab: usize, probs: Vec<f64>, cap: usize) -> Result<Self> {
        TokenAlphabet::new(vocab)?;
        if len == 0 {
            return Err(GgmError::InvalidInput("sequence length must be positive".into()));
        }
        let n = state_count(vocab, len, cap)?;
        if probs.len() != n {
            return Err(GgmError::ShapeMismatch(format!("expected {n} probabilities, got {}", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GgmError::InvalidInput("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > JOINT_NORMALIZATION_TOL {
            return Err(GgmError::NotNormalized { sum, tol: JOINT_NORMALIZATION_TOL });
        }
        Ok(Self { len, vocab, probs })
    }

    /// Builds from propagated masses without re-checking normalization.
    pub(crate) fn from_parts(len: usize, vocab: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), vocab.pow(len as u32));
        Self { len, vocab, probs }
    }

    pub fn uniform(len: usize, vocab: usize) -> Result<Self> {
        let n = state_count(vocab, len, DEFAULT_STATE_CAP)?;
        Self::new(len, vocab, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(sequence: &[Token], vocab: usize) -> Result<Self> {
        let len = sequence.len();
        let alphabet = TokenAlphabet::new(vocab)?;
        TokenSequence::new(sequence.to_vec(), alphabet)?;
        let n = state_count(vocab, len, DEFAULT_STATE_CAP)?;
        let mut probs = vec![0.0; n];
        probs[encode(sequence, vocab)] = 1.0;
        Self::new(len, vocab, probs)
    }

    /// `Π(·|X)^⊗L`.
    pub fn product(token_probs: &[f64], len: usize) -> Result<Self> {
        let vocab = token_probs.len();
        let n = state_count(vocab, len, DEFAULT_STATE_CAP)?;
        let mut probs = vec![1.0; n];
        for (idx, p) in probs.iter_mut().enumerate() {
            for k in 0..len {
                *p *= token_probs[digit(idx, k, len, vocab)];
            }
        }
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Self::new(len, vocab, probs)
    }

    /// Seeded random table with i.i.d. `Exp(1)` weights (a flat Dirichlet draw).
    pub fn random(len: usize, vocab: usize, seed: u64) -> Result<Self> {
        let n = state_count(vocab, len, DEFAULT_STATE_CAP)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        Self::from_weights(len, vocab, weights)
    }

    /// Mass split evenly between the two alternating sequences `0101…` and `1010…`.
    pub fn anti_correlated(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(GgmError::InvalidInput("anti-correlated preset needs L ≥ 2".into()));
        }
        let n = state_count(2, len, DEFAULT_STATE_CAP)?;
        let even: Vec<Token> = (0..len).map(|k| (k % 2) as Token).collect();
        let odd: Vec<Token> = even.iter().map(|t| 1 - t).collect();
        let mut probs = vec![0.0; n];
        probs[encode(&even, 2)] = 0.5;
        probs[encode(&odd, 2)] = 0.5;
        Self::new(len, 2, probs)
    }

    /// Open-chain Ising model on `L` binary spins, `P(x) ∝ exp(β Σ_k s_k s_{k+1})`.
    pub fn ising_chain(len: usize, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(GgmError::InvalidInput("inverse temperature must be finite".into()));
        }
        let n = state_count(2, len, DEFAULT_STATE_CAP)?;
        let weights = (0..n)
            .map(|idx| {
                let spin = |k: usize| if digit(idx, k, len, 2) == 1 { 1.0 } else { -1.0 };
                let energy: f64 = (0..len.saturating_sub(1)).map(|k| spin(k) * spin(k + 1)).sum();
                (beta * energy).exp()
            })
            .collect();
        Self::from_weights(len, 2, weights)
    }

    pub fn from_weights(len: usize, vocab: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(GgmError::InvalidInput("weights must have positive finite total".into()));
        }
        Self::new(len, vocab, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn alphabet(&self) -> TokenAlphabet {
        TokenAlphabet::new(self.vocab).expect("validated at construction")
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, sequence: &[Token]) -> f64 {
        self.probs[self.index_of(sequence)]
    }

    pub fn index_of(&self, sequence: &[Token]) -> usize {
        debug_assert_eq!(sequence.len(), self.len);
        encode(sequence, self.vocab)
    }

    pub fn decode(&self, index: usize) -> Vec<Token> {
        decode(index, self.len, self.vocab)
    }

    pub fn sequence(&self, index: usize) -> TokenSequence {
        TokenSequence::from_raw(self.decode(index))
    }

    /// Index stride of `position`.
    pub fn stride(&self, position: usize) -> usize {
        self.vocab.pow((self.len - 1 - position) as u32)
    }

    /// Indices of the states with token 0 at `position`; adding `a·stride`
    /// walks the fiber of states sharing the remaining coordinates.
    pub fn fiber_bases(&self, position: usize) -> impl Iterator<Item = usize> + '_ {
        let stride = self.stride(position);
        let vocab = self.vocab;
        (0..self.probs.len()).filter(move |idx| (idx / stride) % vocab == 0)
    }

    /// `P(X_{-i} = x_{-i})`.
    pub fn context_mass(&self, sequence: &[Token], position: usize) -> f64 {
        let stride = self.stride(position);
        let base = self.index_of(sequence) - sequence[position] as usize * stride;
        (0..self.vocab).map(|a| self.probs[base + a * stride]).sum()
    }

    /// Marginal table of the first `prefix_len` positions (row-major, length `V^prefix_len`).
    pub fn prefix_marginal(&self, prefix_len: usize) -> Vec<f64> {
        assert!(prefix_len <= self.len);
        let block = self.vocab.pow((self.len - prefix_len) as u32);
        self.probs.chunks(block).map(|c| c.iter().sum()).collect()
    }

    /// Per-position marginal over tokens.
    pub fn position_marginal(&self, position: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab];
        for (idx, &p) in self.probs.iter().enumerate() {
            out[digit(idx, position, self.len, self.vocab)] += p;
        }
        out
    }

    /// Draws a state index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::sampling::sample_categorical(&self.probs, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenSequence {
        self.sequence(self.sample_index(rng))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn encode(sequence: &[Token], vocab: usize) -> usize {
    sequence.iter().fold(0usize, |acc, &t| acc * vocab + t as usize)
}

pub(crate) fn decode(mut index: usize, len: usize, vocab: usize) -> Vec<Token> {
    let mut out = vec![0 as Token; len];
    for slot in out.iter_mut().rev() {
        *slot = (index % vocab) as Token;
        index /= vocab;
    }
    out
}

fn digit(index: usize, position: usize, len: usize, vocab: usize) -> usize {
    (index / vocab.pow((len - 1 - position) as u32)) % vocab
}
