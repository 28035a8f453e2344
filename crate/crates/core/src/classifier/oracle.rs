use crate::alphabet::{MaskedSequence, Token, TokenSequence};
use crate::classifier::{Denoiser, DenoiserOutput};
use crate::error::{GgmError, Result};
use crate::forward::{forward_marginals, forward_propagate_exact};
use crate::joint::JointDistribution;
use crate::noise::NoiseSequence;
use crate::schedule::ScanSchedule;

/// Bayes-optimal denoiser computed from the exactly propagated marginals `P_t`.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    schedule: ScanSchedule,
    noise: NoiseSequence,
    marginals: Vec<JointDistribution>,
}

impl ExactOracle {
    /// Precomputes `P_0, …, P_T` for the schedule's horizon.
    pub fn new(p_star: &JointDistribution, schedule: &ScanSchedule, noise: &NoiseSequence) -> Result<Self> {
        let marginals = forward_marginals(p_star, schedule.horizon(), schedule, noise)?;
        Ok(Self { schedule: schedule.clone(), noise: noise.clone(), marginals })
    }

    pub fn target(&self) -> &JointDistribution {
        &self.marginals[0]
    }

    /// `P_t`.
    pub fn marginal(&self, t: usize) -> &JointDistribution {
        &self.marginals[t]
    }

    pub fn schedule(&self) -> &ScanSchedule {
        &self.schedule
    }

    pub fn noise(&self) -> &NoiseSequence {
        &self.noise
    }

    /// `q = P(Z_t = x_{i_t} | X_{t+1} = x)`.
    pub fn noise_posterior(&self, x_next: &TokenSequence, t: usize) -> Result<f64> {
        let position = self.schedule.position(t)?;
        let (num, den) = posterior_parts(&self.marginals[t], &self.noise, t, x_next.as_slice(), position);
        if den <= 0.0 {
            return Err(GgmError::UndefinedConditional(format!(
                "P(X_{{t+1}} = {:?}) = 0 at t = {t}",
                x_next.as_slice()
            )));
        }
        Ok(num / den)
    }
}

/// Numerator `Π_t(a)·P_t(X_{-i} = x_{-i})` and denominator
/// `Π_t(φ)·P_t(x) + Π_t(a)·P_t(X_{-i} = x_{-i})` of the noise posterior.
fn posterior_parts(p_t: &JointDistribution, noise: &NoiseSequence, t: usize, x: &[Token], position: usize) -> (f64, f64) {
    let law = noise.at(t);
    let a = x[position];
    let context = p_t.context_mass(x, position);
    let num = law.token_mass(a) * context;
    (num, law.stay_prob() * p_t.prob(x) + num)
}

/// One-shot version of [`ExactOracle::noise_posterior`] that propagates `P_t` itself.
pub fn oracle_noise_posterior(
    p_star: &JointDistribution,
    t: usize,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    x_next: &TokenSequence,
) -> Result<f64> {
    let position = schedule.position(t)?;
    let p_t = forward_propagate_exact(p_star, t, schedule, noise)?;
    if x_next.len() != p_t.len() {
        return Err(GgmError::ShapeMismatch("query length differs from the table".into()));
    }
    let (num, den) = posterior_parts(&p_t, noise, t, x_next.as_slice(), position);
    if den <= 0.0 {
        return Err(GgmError::UndefinedConditional(format!("P(X_{{t+1}} = {:?}) = 0", x_next.as_slice())));
    }
    Ok(num / den)
}

impl Denoiser for ExactOracle {
    fn vocab_size(&self) -> usize {
        self.noise.vocab_size()
    }

    /// Queries whose `X_{t+1}` has probability zero report `ŷ_a = 1` (no evidence of signal).
    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput> {
        let position = self.schedule.position(t)?;
        if masked.masked_position() != position {
            return Err(GgmError::InvalidInput(format!(
                "mask at {} but step {t} scans position {position}",
                masked.masked_position()
            )));
        }
        let p_t = &self.marginals[t];
        if masked.len() != p_t.len() {
            return Err(GgmError::ShapeMismatch("query length differs from the table".into()));
        }
        let mut x = masked.fill(0).into_vec();
        let y_hat = (0..self.vocab_size() as Token)
            .map(|a| {
                x[position] = a;
                let (num, den) = posterior_parts(p_t, &self.noise, t, &x, position);
                if den > 0.0 {
                    (num / den).min(1.0)
                } else {
                    1.0
                }
            })
            .collect();
        DenoiserOutput::new(y_hat)
    }
}
