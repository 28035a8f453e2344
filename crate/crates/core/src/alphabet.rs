//! Token alphabet and the sequence views used throughout the crate.
//!
//! Tokens are dense ids `0..V`. Two ids outside that range are reserved: [`PHI`]
//! is the "leave the position alone" outcome of a noise draw and [`OMEGA`] marks
//! the single position a denoiser is asked about.

use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};

pub type Token = u32;

/// Reserved noise outcome meaning "keep the current token".
pub const PHI: Token = u32::MAX - 1;
/// Reserved mask placeholder.
pub const OMEGA: Token = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlphabet {
    size: usize,
}

impl TokenAlphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(GgmError::InvalidInput("alphabet must hold at least one token".into()));
        }
        if size >= PHI as usize {
            return Err(GgmError::InvalidInput(format!(
                "alphabet size {size} collides with reserved ids"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, token: Token) -> bool {
        (token as usize) < self.size
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> {
        0..self.size as Token
    }
}

/// A fully observed sequence over the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<Token>);

impl TokenSequence {
    pub fn new(tokens: Vec<Token>, alphabet: TokenAlphabet) -> Result<Self> {
        if tokens.is_empty() {
            return Err(GgmError::InvalidInput("sequence must be non-empty".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| !alphabet.contains(t)) {
            return Err(GgmError::InvalidInput(format!(
                "token {bad} outside alphabet of size {}",
                alphabet.size()
            )));
        }
        Ok(Self(tokens))
    }

    /// Wraps tokens already known to be valid.
    pub(crate) fn from_raw(tokens: Vec<Token>) -> Self {
        Self(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Token] {
        &self.0
    }

    pub fn get(&self, position: usize) -> Token {
        self.0[position]
    }

    pub(crate) fn set(&mut self, position: usize, token: Token) {
        self.0[position] = token;
    }

    pub fn into_vec(self) -> Vec<Token> {
        self.0
    }

    /// Masks `position` with [`OMEGA`].
    pub fn mask(&self, position: usize) -> MaskedSequence {
        let mut entries = self.0.clone();
        entries[position] = OMEGA;
        MaskedSequence { entries, masked_position: position }
    }

    /// The context `x_{-i}`: every entry except `position`.
    pub fn without(&self, position: usize) -> Vec<Token> {
        self.0
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != position)
            .map(|(_, &t)| t)
            .collect()
    }
}

/// A sequence with exactly one entry replaced by [`OMEGA`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskedSequence {
    entries: Vec<Token>,
    masked_position: usize,
}

impl MaskedSequence {
    pub fn new(entries: Vec<Token>, alphabet: TokenAlphabet) -> Result<Self> {
        let masked: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t == OMEGA)
            .map(|(j, _)| j)
            .collect();
        if masked.len() != 1 {
            return Err(GgmError::InvalidInput(format!(
                "expected exactly one mask, found {}",
                masked.len()
            )));
        }
        if let Some(&bad) = entries.iter().find(|&&t| t != OMEGA && !alphabet.contains(t)) {
            return Err(GgmError::InvalidInput(format!("token {bad} outside alphabet")));
        }
        Ok(Self { entries, masked_position: masked[0] })
    }

    pub fn entries(&self) -> &[Token] {
        &self.entries
    }

    pub fn masked_position(&self) -> usize {
        self.masked_position
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fills the mask with `token`.
    pub fn fill(&self, token: Token) -> TokenSequence {
        let mut entries = self.entries.clone();
        entries[self.masked_position] = token;
        TokenSequence(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_distinct_and_outside_alphabet() {
        let alphabet = TokenAlphabet::new(4).unwrap();
        assert_ne!(PHI, OMEGA);
        assert!(!alphabet.contains(PHI));
        assert!(!alphabet.contains(OMEGA));
        assert!(TokenAlphabet::new(0).is_err());
    }

    #[test]
    fn masking_replaces_one_slot() {
        let alphabet = TokenAlphabet::new(2).unwrap();
        let x = TokenSequence::new(vec![0, 1], alphabet).unwrap();
        let m = x.mask(1);
        assert_eq!(m.entries(), &[0, OMEGA]);
        assert_eq!(m.masked_position(), 1);
        assert_eq!(m.fill(0).as_slice(), &[0, 0]);
        assert_eq!(x.without(1), vec![0]);
    }

    #[test]
    fn rejects_bad_sequences() {
        let alphabet = TokenAlphabet::new(2).unwrap();
        assert!(TokenSequence::new(vec![0, 2], alphabet).is_err());
        assert!(TokenSequence::new(vec![], alphabet).is_err());
        assert!(MaskedSequence::new(vec![0, 1], alphabet).is_err());
        assert!(MaskedSequence::new(vec![OMEGA, OMEGA], alphabet).is_err());
        assert!(MaskedSequence::new(vec![OMEGA, 1], alphabet).is_ok());
    }
}
