//! Time-independent Glauber (Gibbs) sampling: resample one position at a time
//! from `P(X_i | X_{-i})`, round-robin, independent of any noise level.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::alphabet::{MaskedSequence, Token, TokenAlphabet, TokenSequence, OMEGA};
use crate::classifier::{invert_posterior, Denoiser};
use crate::error::{GgmError, Result};
use crate::joint::JointDistribution;
use crate::noise::{NoiseDistribution, NoiseSequence};
use crate::reverse::SamplerConfig;
use crate::rng::RngStream;
use crate::sampling::{apply_temperature, normalize, sample_categorical, top_p_filter};
use crate::schedule::ScanSchedule;

/// Single-site conditionals `P_i(· | x_{-i})`.
pub trait ConditionalModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// The entry `x[position]` is ignored.
    fn conditional(&self, position: usize, x: &[Token]) -> Result<Vec<f64>>;
}

/// Conditionals read off an enumerated target. Contexts of probability zero
/// fall back to a token law and are counted.
#[derive(Debug)]
pub struct ExactConditional {
    target: JointDistribution,
    fallback: Vec<f64>,
    fallbacks: AtomicU64,
}

impl ExactConditional {
    /// Falls back to `Π(·|X)` of `noise`.
    pub fn new(target: JointDistribution, noise: &NoiseDistribution) -> Result<Self> {
        if noise.vocab_size() != target.vocab_size() {
            return Err(GgmError::ShapeMismatch("fallback law and target vocabularies differ".into()));
        }
        Ok(Self { target, fallback: noise.token_probs().to_vec(), fallbacks: AtomicU64::new(0) })
    }

    /// Falls back to the uniform law.
    pub fn with_uniform_fallback(target: JointDistribution) -> Self {
        let v = target.vocab_size();
        Self { target, fallback: vec![1.0 / v as f64; v], fallbacks: AtomicU64::new(0) }
    }

    pub fn target(&self) -> &JointDistribution {
        &self.target
    }

    /// How many queries hit a zero-probability context so far.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }
}

impl ConditionalModel for ExactConditional {
    fn vocab_size(&self) -> usize {
        self.target.vocab_size()
    }

    fn conditional(&self, position: usize, x: &[Token]) -> Result<Vec<f64>> {
        if x.len() != self.target.len() {
            return Err(GgmError::ShapeMismatch("context length differs from the target".into()));
        }
        if position >= x.len() {
            return Err(GgmError::OutOfRange { what: "position", value: position, bound: x.len() });
        }
        let mut full = x.to_vec();
        full[position] = 0;
        let base = self.target.index_of(&full);
        let stride = self.target.stride(position);
        let probs = self.target.probs();
        let weights: Vec<f64> = (0..self.vocab_size()).map(|a| probs[base + a * stride]).collect();
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            if self.fallbacks.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!("zero-probability context at position {position}; using the fallback law");
            } else {
                log::debug!("zero-probability context at position {position}; using the fallback law");
            }
            return Ok(self.fallback.clone());
        }
        Ok(weights.iter().map(|w| w / mass).collect())
    }
}

/// Approximate conditionals from a learned denoiser: position `i` is queried
/// at its first scan step, where `X_{t+1,-i}` is closest to clean data.
pub struct DenoiserConditional<'a, D: Denoiser + ?Sized> {
    model: &'a D,
    schedule: &'a ScanSchedule,
    noise: &'a NoiseSequence,
}

impl<'a, D: Denoiser + ?Sized> DenoiserConditional<'a, D> {
    pub fn new(model: &'a D, schedule: &'a ScanSchedule, noise: &'a NoiseSequence) -> Self {
        Self { model, schedule, noise }
    }
}

impl<D: Denoiser + ?Sized> ConditionalModel for DenoiserConditional<'_, D> {
    fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    fn conditional(&self, position: usize, x: &[Token]) -> Result<Vec<f64>> {
        let t = self
            .schedule
            .permutation()
            .iter()
            .position(|&p| p == position)
            .ok_or(GgmError::OutOfRange { what: "position", value: position, bound: self.schedule.len() })?;
        let mut entries = x.to_vec();
        entries[position] = OMEGA;
        let masked = MaskedSequence::new(entries, TokenAlphabet::new(self.vocab_size())?)?;
        let scores = invert_posterior(&self.model.predict(&masked, t)?, self.noise.at(t))?;
        if !(scores.iter().sum::<f64>() > 0.0) {
            return Err(GgmError::Degenerate { step: t });
        }
        Ok(normalize(&scores))
    }
}

fn shaped(probs: Vec<f64>, config: &SamplerConfig) -> Result<Vec<f64>> {
    let mut probs = probs;
    if config.temperature != 1.0 {
        probs = apply_temperature(&probs, config.temperature)?;
    }
    if config.top_p < 1.0 {
        probs = top_p_filter(&probs, config.top_p)?;
    }
    Ok(probs)
}

/// Resamples `position` from the model's conditional; all other positions are copied.
pub fn gibbs_step<M: ConditionalModel + ?Sized, R: Rng + ?Sized>(
    x: &TokenSequence,
    position: usize,
    model: &M,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TokenSequence> {
    let probs = shaped(model.conditional(position, x.as_slice())?, config)?;
    let mut out = x.clone();
    out.set(position, sample_categorical(&probs, rng) as Token);
    Ok(out)
}

/// `sweeps` round-robin passes in schedule-permutation order. Without `x_init`
/// the chain starts from i.i.d. uniform tokens.
pub fn gibbs_run<M: ConditionalModel + ?Sized, R: Rng + ?Sized>(
    x_init: Option<&TokenSequence>,
    sweeps: usize,
    model: &M,
    schedule: &ScanSchedule,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TokenSequence> {
    config.validate()?;
    let len = schedule.len();
    let vocab = model.vocab_size();
    let mut x = match x_init {
        Some(x) if x.len() != len => {
            return Err(GgmError::ShapeMismatch(format!("initial sequence has length {}, expected {len}", x.len())))
        }
        Some(x) => x.clone(),
        None => TokenSequence::from_raw((0..len).map(|_| rng.gen_range(0..vocab) as Token).collect()),
    };
    for _ in 0..sweeps {
        for &position in schedule.permutation() {
            let probs = shaped(model.conditional(position, x.as_slice())?, config)?;
            x.set(position, sample_categorical(&probs, rng) as Token);
        }
    }
    Ok(x)
}

/// `count` independent chains from uniform starts; chain `k` uses `root.substream(k)`.
pub fn gibbs_many<M: ConditionalModel + ?Sized>(
    sweeps: usize,
    model: &M,
    schedule: &ScanSchedule,
    config: &SamplerConfig,
    root: &RngStream,
    count: usize,
) -> Result<Vec<TokenSequence>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| gibbs_run(None, sweeps, model, schedule, config, &mut root.substream(k)))
        .collect()
}

/// Pushes `init` through `sweeps` exact round-robin sweeps of the Gibbs kernel
/// (no truncation or temperature).
pub fn gibbs_propagate_exact<M: ConditionalModel + ?Sized>(
    model: &M,
    schedule: &ScanSchedule,
    init: &JointDistribution,
    sweeps: usize,
) -> Result<JointDistribution> {
    let len = init.len();
    let vocab = init.vocab_size();
    if len != schedule.len() || vocab != model.vocab_size() {
        return Err(GgmError::ShapeMismatch("initial table, schedule and model disagree".into()));
    }
    let mut current = init.clone();
    for _ in 0..sweeps {
        for &position in schedule.permutation() {
            let stride = current.stride(position);
            let src = current.probs();
            let mut out = vec![0.0; src.len()];
            for base in current.fiber_bases(position) {
                let mass: f64 = (0..vocab).map(|a| src[base + a * stride]).sum();
                if mass == 0.0 {
                    continue;
                }
                let probs = model.conditional(position, &current.decode(base))?;
                for (a, p) in probs.into_iter().enumerate() {
                    out[base + a * stride] = mass * p;
                }
            }
            current = JointDistribution::from_parts(len, vocab, out);
        }
    }
    Ok(current)
}
