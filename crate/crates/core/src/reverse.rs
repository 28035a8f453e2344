//! Reverse Glauber dynamics.
//!
//! Starting from `X̂_T ∼ Π_T(·|X)^L`, step `t = T−1, …, 0` masks position `i_t`,
//! asks the denoiser for `ŷ`, converts it into a categorical law over the
//! position with [`invert_posterior`] and resamples that single position.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{MaskedSequence, Token, TokenAlphabet, TokenSequence, OMEGA};
use crate::classifier::{invert_posterior, Denoiser};
use crate::error::{GgmError, Result};
use crate::joint::{decode, JointDistribution};
use crate::noise::{NoiseDistribution, NoiseSequence};
use crate::rng::RngStream;
use crate::sampling::{apply_temperature, normalize, sample_categorical};
use crate::schedule::ScanSchedule;

pub use crate::sampling::top_p_filter;

/// Tolerance on `Σ scores − 1` when normalization is switched off.
pub const RAW_SCORE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub top_p: f64,
    pub temperature: f64,
    /// Divide the inverted scores by their sum. When off the scores must
    /// already sum to one within [`RAW_SCORE_TOL`].
    pub normalize_scores: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { top_p: 1.0, temperature: 1.0, normalize_scores: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GgmError::InvalidConfig(format!("top-p {} not in (0, 1]", self.top_p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GgmError::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }

    /// No truncation and unit temperature.
    pub fn is_neutral(&self) -> bool {
        self.top_p == 1.0 && self.temperature == 1.0
    }
}

/// Positions held fixed during conditional generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    positions: Vec<usize>,
    tokens: Vec<Token>,
}

impl Prompt {
    pub fn new(positions: Vec<usize>, tokens: Vec<Token>) -> Result<Self> {
        if positions.len() != tokens.len() {
            return Err(GgmError::InvalidInput("prompt positions and tokens differ in length".into()));
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(GgmError::InvalidInput("prompt positions must be distinct".into()));
        }
        Ok(Self { positions, tokens })
    }

    pub fn empty() -> Self {
        Self { positions: Vec::new(), tokens: Vec::new() }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn token_at(&self, position: usize) -> Option<Token> {
        self.positions.iter().position(|&p| p == position).map(|k| self.tokens[k])
    }

    /// Per-position clamp table for a sequence of length `len`.
    pub fn clamps(&self, len: usize, alphabet: TokenAlphabet) -> Result<Vec<Option<Token>>> {
        let mut out = vec![None; len];
        for (&p, &tok) in self.positions.iter().zip(&self.tokens) {
            if p >= len {
                return Err(GgmError::OutOfRange { what: "prompt position", value: p, bound: len });
            }
            if !alphabet.contains(tok) {
                return Err(GgmError::InvalidInput(format!("prompt token {tok} outside alphabet")));
            }
            out[p] = Some(tok);
        }
        Ok(out)
    }
}

/// The law used to resample the masked position, plus the raw score sum `Σ_a score(a)`.
pub fn step_distribution<D: Denoiser + ?Sized>(
    masked: &MaskedSequence,
    t: usize,
    model: &D,
    noise: &NoiseDistribution,
    config: &SamplerConfig,
) -> Result<(Vec<f64>, f64)> {
    let y_hat = model.predict(masked, t)?;
    let scores = invert_posterior(&y_hat, noise)?;
    let sum: f64 = scores.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(GgmError::Degenerate { step: t });
    }
    if (sum - 1.0).abs() > RAW_SCORE_TOL {
        log::trace!("step {t}: score sum deviates from 1 by {:e}", sum - 1.0);
        if !config.normalize_scores {
            return Err(GgmError::NumericGuard(format!("scores sum to {sum} at step {t} with normalization off")));
        }
    }
    let mut probs = normalize(&scores);
    if config.temperature != 1.0 {
        probs = apply_temperature(&probs, config.temperature)?;
    }
    if config.top_p < 1.0 {
        probs = top_p_filter(&probs, config.top_p)?;
    }
    Ok((probs, sum))
}

fn check_shapes<D: Denoiser + ?Sized>(
    len: usize,
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
) -> Result<()> {
    if len != schedule.len() {
        return Err(GgmError::ShapeMismatch(format!("length {len} vs schedule length {}", schedule.len())));
    }
    if model.vocab_size() != noise.vocab_size() {
        return Err(GgmError::ShapeMismatch("model and noise vocabularies differ".into()));
    }
    Ok(())
}

/// One reverse step: resample `i_t` of `x_next`, copy every other position.
pub fn reverse_step<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    x_next: &TokenSequence,
    t: usize,
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TokenSequence> {
    check_shapes(x_next.len(), model, schedule, noise)?;
    let position = schedule.position(t)?;
    let (probs, _) = step_distribution(&x_next.mask(position), t, model, noise.at(t), config)?;
    let mut x_t = x_next.clone();
    x_t.set(position, sample_categorical(&probs, rng) as Token);
    Ok(x_t)
}

/// Unconditional generation: `X̂_T ∼ Π_T(·|X)^L`, then `T` reverse steps.
pub fn sample<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TokenSequence> {
    conditional_sample(model, schedule, noise, config, &Prompt::empty(), rng)
}

/// Zero-shot infilling: prompt positions start at their tokens and are never resampled.
pub fn conditional_sample<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    prompt: &Prompt,
    rng: &mut R,
) -> Result<TokenSequence> {
    config.validate()?;
    let len = schedule.len();
    check_shapes(len, model, schedule, noise)?;
    if schedule.horizon() == 0 {
        return Err(GgmError::InvalidConfig("sampling needs a horizon of at least 1".into()));
    }
    let alphabet = TokenAlphabet::new(noise.vocab_size())?;
    let clamps = prompt.clamps(len, alphabet)?;

    let init_law = noise.at(schedule.horizon());
    let tokens = clamps.iter().map(|c| c.unwrap_or_else(|| init_law.draw_token(rng))).collect();
    let mut x = TokenSequence::from_raw(tokens);

    for t in (0..schedule.horizon()).rev() {
        let position = schedule.position_unchecked(t);
        if let Some(tok) = clamps[position] {
            x.set(position, tok);
            continue;
        }
        let (probs, _) = step_distribution(&x.mask(position), t, model, noise.at(t), config)?;
        x.set(position, sample_categorical(&probs, rng) as Token);
    }
    debug_assert!(clamps.iter().enumerate().all(|(j, c)| c.map_or(true, |tok| x.get(j) == tok)));
    Ok(x)
}

/// `count` independent chains; chain `k` uses `root.substream(k)`.
pub fn sample_many<D: Denoiser + ?Sized>(
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    prompt: &Prompt,
    root: &RngStream,
    count: usize,
) -> Result<Vec<TokenSequence>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| conditional_sample(model, schedule, noise, config, prompt, &mut root.substream(k)))
        .collect()
}

/// `Π_T(·|X)` on free positions, point masses on prompt positions.
pub fn initial_distribution(noise: &NoiseSequence, horizon: usize, len: usize, prompt: &Prompt) -> Result<JointDistribution> {
    let law = noise.at(horizon).token_probs();
    let joint = JointDistribution::product(law, len)?;
    if prompt.is_empty() {
        return Ok(joint);
    }
    let clamps = prompt.clamps(len, joint.alphabet())?;
    let vocab = joint.vocab_size();
    let weights = (0..joint.num_states())
        .map(|idx| {
            decode(idx, len, vocab)
                .iter()
                .zip(&clamps)
                .map(|(&tok, c)| match c {
                    Some(c) if *c == tok => 1.0,
                    Some(_) => 0.0,
                    None => law[tok as usize],
                })
                .product()
        })
        .collect();
    JointDistribution::from_weights(len, vocab, weights)
}

/// Pushes `init` through the reverse kernel for `t = T−1, …, 0` and returns `P̂_0`.
pub fn reverse_propagate_exact<D: Denoiser + ?Sized>(
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    init: &JointDistribution,
) -> Result<JointDistribution> {
    reverse_propagate_exact_conditional(model, schedule, noise, config, init, &Prompt::empty())
}

/// As [`reverse_propagate_exact`], leaving prompt positions untouched.
pub fn reverse_propagate_exact_conditional<D: Denoiser + ?Sized>(
    model: &D,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &SamplerConfig,
    init: &JointDistribution,
    prompt: &Prompt,
) -> Result<JointDistribution> {
    config.validate()?;
    if !config.is_neutral() {
        return Err(GgmError::InvalidConfig(
            "exact propagation requires top-p = 1 and temperature = 1".into(),
        ));
    }
    let len = init.len();
    check_shapes(len, model, schedule, noise)?;
    if init.vocab_size() != noise.vocab_size() {
        return Err(GgmError::ShapeMismatch("initial table and noise vocabularies differ".into()));
    }
    let clamps = prompt.clamps(len, init.alphabet())?;
    let vocab = init.vocab_size();
    let mut current = init.clone();
    for t in (0..schedule.horizon()).rev() {
        let position = schedule.position_unchecked(t);
        if clamps[position].is_some() {
            continue;
        }
        let stride = current.stride(position);
        let src = current.probs();
        let mut out = vec![0.0; src.len()];
        for base in current.fiber_bases(position) {
            let mass: f64 = (0..vocab).map(|a| src[base + a * stride]).sum();
            if mass == 0.0 {
                continue;
            }
            let mut entries = current.decode(base);
            entries[position] = OMEGA;
            let masked = MaskedSequence::new(entries, current.alphabet())?;
            let (probs, _) = step_distribution(&masked, t, model, noise.at(t), config)?;
            for (a, p) in probs.into_iter().enumerate() {
                out[base + a * stride] = mass * p;
            }
        }
        current = JointDistribution::from_parts(len, vocab, out);
    }
    Ok(current)
}

/// `⌈L·ln(L/δ)/ln(1/(1−p))⌉`, floored at zero.
pub fn theorem1_min_steps(len: usize, p: f64, delta: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GgmError::Domain(format!("redraw probability {p} must lie in (0, 1)")));
    }
    if !(delta > 0.0) {
        return Err(GgmError::InvalidInput(format!("δ = {delta} must be positive")));
    }
    let raw = len as f64 * (len as f64 / delta).ln() / (1.0 / (1.0 - p)).ln();
    if raw <= 0.0 {
        return Ok(0);
    }
    // absorb float noise so exact integers like 4·log₂16 stay exact
    let nearest = raw.round();
    let steps = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { raw.ceil() };
    Ok(steps as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{DenoiserOutput, ExactOracle};
    use crate::analysis::tv_distance;

    struct Fixed(Vec<f64>);

    impl Denoiser for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }

        fn predict(&self, _: &MaskedSequence, _: usize) -> Result<DenoiserOutput> {
            DenoiserOutput::new(self.0.clone())
        }
    }

    fn worked() -> (JointDistribution, ScanSchedule, NoiseSequence) {
        (
            JointDistribution::new(2, 2, vec![0.5, 0.25, 0.25, 0.0]).unwrap(),
            ScanSchedule::identity(2, 8).unwrap(),
            NoiseSequence::constant(NoiseDistribution::uniform(2, 0.5).unwrap()),
        )
    }

    #[test]
    fn theorem1_examples() {
        assert_eq!(theorem1_min_steps(4, 0.5, 0.25).unwrap(), 16);
        assert_eq!(theorem1_min_steps(4, 0.5, 4.0).unwrap(), 0);
        assert_eq!(theorem1_min_steps(4, 0.5, 9.0).unwrap(), 0);
        assert_eq!(theorem1_min_steps(1024, 0.5, 0.01).unwrap(), 17044);
        assert_eq!(theorem1_min_steps(3, 0.5, 0.05).unwrap(), 18);
        assert!(matches!(theorem1_min_steps(4, 1.0, 0.1), Err(GgmError::Domain(_))));
        assert!(matches!(theorem1_min_steps(4, 0.0, 0.1), Err(GgmError::Domain(_))));
    }

    #[test]
    fn signal_certain_predictions_give_token_law() {
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(3, 0.5).unwrap());
        let y = (1.0 / 6.0) / (1.0 / 6.0 + 0.5);
        let model = Fixed(vec![y; 3]);
        let x = TokenSequence::new(vec![0, 1], TokenAlphabet::new(3).unwrap()).unwrap();
        let (probs, sum) = step_distribution(&x.mask(0), 0, &model, noise.at(0), &SamplerConfig::default()).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        // each score is exactly one before normalization
        assert!((sum - 3.0).abs() < 1e-12);
    }

    #[test]
    fn worked_reverse_step_distribution() {
        let (p, schedule, noise) = worked();
        let oracle = ExactOracle::new(&p, &schedule, &noise).unwrap();
        let x1 = TokenSequence::new(vec![0, 0], p.alphabet()).unwrap();
        let (probs, _) = step_distribution(&x1.mask(0), 0, &oracle, noise.at(0), &SamplerConfig::default()).unwrap();
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-12);

        let mut rng = RngStream::new(17);
        let n = 60_000;
        let hits = (0..n)
            .filter(|_| {
                reverse_step(&x1, 0, &oracle, &schedule, &noise, &SamplerConfig::default(), &mut rng).unwrap().get(0) == 0
            })
            .count() as f64
            / n as f64;
        let sigma = (2.0f64 / 9.0 / n as f64).sqrt();
        assert!((hits - 2.0 / 3.0).abs() < 4.0 * sigma, "{hits}");
    }

    #[test]
    fn all_zero_scores_are_degenerate() {
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(2, 0.5).unwrap());
        let schedule = ScanSchedule::identity(2, 2).unwrap();
        let x = TokenSequence::new(vec![0, 0], TokenAlphabet::new(2).unwrap()).unwrap();
        let err = reverse_step(&x, 1, &Fixed(vec![1.0, 1.0]), &schedule, &noise, &SamplerConfig::default(), &mut RngStream::new(0));
        assert!(matches!(err, Err(GgmError::Degenerate { step: 1 })));
    }

    #[test]
    fn raw_scores_checked_when_not_normalizing() {
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(2, 0.5).unwrap());
        let x = TokenSequence::new(vec![0, 0], TokenAlphabet::new(2).unwrap()).unwrap();
        let config = SamplerConfig { normalize_scores: false, ..Default::default() };
        assert!(step_distribution(&x.mask(0), 0, &Fixed(vec![0.25, 0.25]), noise.at(0), &config).is_err());
        assert!(step_distribution(&x.mask(0), 0, &Fixed(vec![0.5, 0.5]), noise.at(0), &config).is_ok());
    }

    #[test]
    fn point_mass_target_is_recovered() {
        let p = JointDistribution::point_mass(&[1, 0, 1], 2).unwrap();
        let schedule = ScanSchedule::identity(3, 6).unwrap();
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(2, 0.5).unwrap());
        let oracle = ExactOracle::new(&p, &schedule, &noise).unwrap();
        let mut rng = RngStream::new(4);
        for _ in 0..500 {
            let x = sample(&oracle, &schedule, &noise, &SamplerConfig::default(), &mut rng).unwrap();
            assert_eq!(x.as_slice(), &[1, 0, 1]);
        }
    }

    #[test]
    fn exact_propagation_refuses_truncation() {
        let (p, schedule, noise) = worked();
        let oracle = ExactOracle::new(&p, &schedule, &noise).unwrap();
        let init = JointDistribution::uniform(2, 2).unwrap();
        let config = SamplerConfig { top_p: 0.9, ..Default::default() };
        assert!(matches!(
            reverse_propagate_exact(&oracle, &schedule, &noise, &config, &init),
            Err(GgmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn conditional_init_clamps() {
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(2, 0.5).unwrap());
        let prompt = Prompt::new(vec![1], vec![1]).unwrap();
        let init = initial_distribution(&noise, 4, 2, &prompt).unwrap();
        assert_eq!(init.probs(), &[0.0, 0.5, 0.0, 0.5]);
        let free = initial_distribution(&noise, 4, 2, &Prompt::empty()).unwrap();
        assert!(tv_distance(&free, &JointDistribution::uniform(2, 2).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn prompt_validation() {
        assert!(Prompt::new(vec![0, 0], vec![1, 1]).is_err());
        assert!(Prompt::new(vec![0], vec![]).is_err());
        let prompt = Prompt::new(vec![3], vec![0]).unwrap();
        assert!(prompt.clamps(2, TokenAlphabet::new(2).unwrap()).is_err());
        let prompt = Prompt::new(vec![0], vec![5]).unwrap();
        assert!(prompt.clamps(2, TokenAlphabet::new(2).unwrap()).is_err());
    }
}
