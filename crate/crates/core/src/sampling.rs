//! Categorical draws and the truncation transforms applied before them.

use rand::Rng;

use crate::error::{GgmError, Result};

/// Inverse-CDF draw from nonnegative weights (need not be normalized).
///
/// Panics if every weight is zero.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "categorical draw from all-zero weights");
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Nucleus truncation.
///
/// Keeps the shortest descending-probability prefix whose cumulative mass
/// reaches `p`, zeroes the rest and renormalizes. Ties go to the smaller id.
pub fn top_p_filter(probs: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GgmError::InvalidConfig(format!("top-p {p} not in (0, 1]")));
    }
    if p >= 1.0 {
        return Ok(probs.to_vec());
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));

    let total: f64 = probs.iter().sum();
    let threshold = p * total;
    let mut kept = vec![0.0; probs.len()];
    let mut acc = 0.0;
    for &i in &order {
        kept[i] = probs[i];
        acc += probs[i];
        if acc >= threshold {
            break;
        }
    }
    let kept_total: f64 = kept.iter().sum();
    Ok(kept.into_iter().map(|w| w / kept_total).collect())
}

/// Raises each weight to `1/temperature` and renormalizes.
pub fn apply_temperature(weights: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(GgmError::InvalidConfig(format!("temperature {temperature} must be positive")));
    }
    let scaled: Vec<f64> = if temperature == 1.0 {
        weights.to_vec()
    } else {
        weights.iter().map(|&w| w.powf(1.0 / temperature)).collect()
    };
    Ok(normalize(&scaled))
}

pub(crate) fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|&w| w / total).collect()
}
