//! Round-robin scan over sequence positions.

use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};

/// Fixed permutation plus horizon `T`; step `t` visits `permutation[t mod L]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSchedule {
    permutation: Vec<usize>,
    horizon: usize,
}

impl ScanSchedule {
    pub fn new(permutation: Vec<usize>, horizon: usize) -> Result<Self> {
        let len = permutation.len();
        if len == 0 {
            return Err(GgmError::InvalidInput("permutation must be non-empty".into()));
        }
        let mut seen = vec![false; len];
        for &p in &permutation {
            if p >= len || seen[p] {
                return Err(GgmError::InvalidInput(format!("{permutation:?} is not a permutation of 0..{len}")));
            }
            seen[p] = true;
        }
        Ok(Self { permutation, horizon })
    }

    /// Identity scan `0, 1, …, L−1, 0, 1, …`.
    pub fn identity(len: usize, horizon: usize) -> Result<Self> {
        Self::new((0..len).collect(), horizon)
    }

    /// Same permutation, different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self { permutation: self.permutation.clone(), horizon }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// `i_t`, checked against the horizon.
    pub fn position(&self, t: usize) -> Result<usize> {
        if t >= self.horizon {
            return Err(GgmError::OutOfRange { what: "step", value: t, bound: self.horizon });
        }
        Ok(self.position_unchecked(t))
    }

    /// `i_t` for any `t`, ignoring the horizon.
    pub fn position_unchecked(&self, t: usize) -> usize {
        self.permutation[t % self.permutation.len()]
    }

    /// `τ_t(j) = { s < t : i_s = j }`, by direct enumeration.
    pub fn visits(&self, position: usize, t: usize) -> Vec<usize> {
        (0..t).filter(|&s| self.position_unchecked(s) == position).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_round_robin() {
        let s = ScanSchedule::identity(3, 7).unwrap();
        assert_eq!(s.position(3).unwrap(), 0);
        let all: Vec<usize> = (0..7).map(|t| s.position(t).unwrap()).collect();
        assert_eq!(all, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn indexes_through_permutation() {
        let s = ScanSchedule::new(vec![2, 0, 1], 6).unwrap();
        assert_eq!(s.position(1).unwrap(), 0);
    }

    #[test]
    fn rejects_out_of_range_step() {
        let s = ScanSchedule::identity(3, 7).unwrap();
        assert!(matches!(s.position(7), Err(GgmError::OutOfRange { .. })));
    }

    #[test]
    fn rejects_non_bijection() {
        assert!(ScanSchedule::new(vec![0, 0, 1], 3).is_err());
        assert!(ScanSchedule::new(vec![0, 3, 1], 3).is_err());
        assert!(ScanSchedule::new(vec![], 3).is_err());
    }

    fn permutation_strategy() -> impl Strategy<Value = Vec<usize>> {
        (1usize..8).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    }

    proptest! {
        #[test]
        fn visit_counts_are_balanced(perm in permutation_strategy(), extra in 0usize..40) {
            let len = perm.len();
            let horizon = len + extra;
            let s = ScanSchedule::new(perm, horizon).unwrap();
            let mut counts = vec![0usize; len];
            for t in 0..horizon {
                counts[s.position(t).unwrap()] += 1;
            }
            let lo = horizon / len;
            let hi = horizon.div_ceil(len);
            for (j, &c) in counts.iter().enumerate() {
                prop_assert!(c >= lo && c <= hi);
                prop_assert_eq!(c, s.visits(j, horizon).len());
            }
        }
    }
}
