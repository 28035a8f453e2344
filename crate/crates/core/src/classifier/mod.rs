//! Signal-vs-noise classification and its inversion into denoising posteriors.
//!
//! For the revealed token `a = x_{t+1,i_t}` a denoiser predicts
//! `ŷ_a = P(Z_t = a | X_{t+1,-i_t}, X_{t+1,i_t} = a)`, the probability that `a`
//! is fresh noise rather than carried-over signal. [`invert_posterior`] turns
//! those predictions into `P(X_{t,i_t} = a | X_{t+1,-i_t})`.

mod logistic;
mod oracle;
mod persist;
mod tabular;

pub use logistic::LogisticModel;
pub use oracle::{oracle_noise_posterior, ExactOracle};
pub use persist::{load_model, LoadedModel, ModelFile, MODEL_FILE_VERSION};
pub use tabular::TabularModel;

use rand::Rng;

use crate::alphabet::{MaskedSequence, Token, TokenSequence};
use crate::error::{GgmError, Result};
use crate::forward::{forward_sample_direct, ForwardTriple};
use crate::joint::JointDistribution;
use crate::noise::{NoiseDistribution, NoiseDraw, NoiseSequence};
use crate::schedule::ScanSchedule;

/// Numerical floor (and, for the loss, ceiling margin) applied to predictions.
pub const CLAMP_EPS: f64 = 1e-6;

/// `ŷ ∈ [0, 1]^X`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    y_hat: Vec<f64>,
}

impl DenoiserOutput {
    pub fn new(y_hat: Vec<f64>) -> Result<Self> {
        if y_hat.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(GgmError::InvalidInput("denoiser outputs must lie in [0, 1]".into()));
        }
        Ok(Self { y_hat })
    }

    pub fn y_hat(&self) -> &[f64] {
        &self.y_hat
    }

    pub fn get(&self, token: Token) -> f64 {
        self.y_hat[token as usize]
    }
}

/// A predictor `(x', t) ↦ ŷ` over masked sequences.
pub trait Denoiser: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput>;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput> {
        (**self).predict(masked, t)
    }
}

/// A denoiser that can absorb one training example at a time.
pub trait Learner: Denoiser {
    /// Applies one update and returns the example's loss before the update.
    fn update(&mut self, example: &TrainExample) -> f64;
}

/// One draw from `D_{t,a}`: the masked sequence, the revealed token and whether it was noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub masked: MaskedSequence,
    pub revealed: Token,
    /// `1_{Z_t = a}`.
    pub label: bool,
    pub t: usize,
}

pub fn make_train_example(triple: &ForwardTriple) -> TrainExample {
    let revealed = triple.x_next.get(triple.position);
    TrainExample {
        masked: triple.x_next.mask(triple.position),
        revealed,
        label: matches!(triple.z_t, NoiseDraw::Token(_)),
        t: triple.t,
    }
}

/// Bernoulli cross-entropy `−y log ŷ − (1−y) log(1−ŷ)`; `ŷ` must already be clamped into `(0, 1)`.
pub fn bce_loss(y_hat: f64, label: bool) -> Result<f64> {
    if !(y_hat > 0.0 && y_hat < 1.0) {
        return Err(GgmError::NumericGuard(format!("prediction {y_hat} must be clamped into (0, 1)")));
    }
    Ok(if label { -y_hat.ln() } else { -(1.0 - y_hat).ln() })
}

pub fn clamp_prediction(y_hat: f64) -> f64 {
    y_hat.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// Unnormalized scores `(Π_t(a)/Π_t(φ))·(1/ŷ_a − 1)`.
///
/// `ŷ_a` is floored at [`CLAMP_EPS`]; `ŷ_a = 1` maps to a score of exactly 0.
pub fn invert_posterior(y_hat: &DenoiserOutput, noise: &NoiseDistribution) -> Result<Vec<f64>> {
    let stay = noise.stay_prob();
    if stay <= 0.0 {
        return Err(GgmError::Domain("inversion needs Π_t(φ) > 0".into()));
    }
    if y_hat.y_hat().len() != noise.vocab_size() {
        return Err(GgmError::ShapeMismatch("prediction and noise vocabularies differ".into()));
    }
    Ok(y_hat
        .y_hat()
        .iter()
        .enumerate()
        .map(|(a, &y)| {
            let y = y.max(CLAMP_EPS);
            noise.token_mass(a as Token) / stay * (1.0 / y - 1.0)
        })
        .collect())
}

/// Learned models only see `t ∈ {0, …, T−2}`. Later steps reuse the most recent
/// trained step that scans the same position, or `T−2` if none exists.
pub fn trained_step(t: usize, horizon: usize, len: usize) -> usize {
    let last = horizon.saturating_sub(2);
    if t <= last {
        return t;
    }
    let back = (t - last).div_ceil(len) * len;
    if back <= t {
        t - back
    } else {
        last
    }
}

/// Source of clean sequences `X_0`.
pub trait DataSource {
    fn draw(&self, rng: &mut dyn rand::RngCore) -> TokenSequence;
}

impl DataSource for JointDistribution {
    fn draw(&self, rng: &mut dyn rand::RngCore) -> TokenSequence {
        self.sample(rng)
    }
}

impl DataSource for [TokenSequence] {
    fn draw(&self, rng: &mut dyn rand::RngCore) -> TokenSequence {
        self[rng.gen_range(0..self.len())].clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    /// Number of clean sequences drawn.
    pub iterations: usize,
    /// Independent `t ∼ Unif{0, …, T−2}` draws per sequence.
    pub timesteps_per_example: usize,
    /// Record the running loss every this many iterations (0 disables logging).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 0, timesteps_per_example: 1, log_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub examples: usize,
    pub mean_loss: f64,
    /// `(iteration, exponential moving average of the loss)`.
    pub log: Vec<(usize, f64)>,
}

const LOSS_EMA_DECAY: f64 = 0.99;

/// Training loop: draw `X_0`, draw `t`, noise directly to `(X_t, Z_t, X_{t+1})`,
/// mask `i_t`, update on the revealed token.
pub fn train<L, R>(
    model: &mut L,
    data: &(impl DataSource + ?Sized),
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport>
where
    L: Learner + ?Sized,
    R: Rng,
{
    if config.iterations > 0 && schedule.horizon() < 2 {
        return Err(GgmError::InvalidConfig("training needs a horizon of at least 2".into()));
    }
    let mut report = TrainReport { examples: 0, mean_loss: 0.0, log: Vec::new() };
    let mut ema: Option<f64> = None;
    let mut total = 0.0;
    for iteration in 1..=config.iterations {
        let x0 = data.draw(rng);
        for _ in 0..config.timesteps_per_example.max(1) {
            let t = rng.gen_range(0..=schedule.horizon() - 2);
            let triple = forward_sample_direct(&x0, t, schedule, noise, rng)?;
            let loss = model.update(&make_train_example(&triple));
            total += loss;
            report.examples += 1;
            ema = Some(match ema {
                None => loss,
                Some(prev) => LOSS_EMA_DECAY * prev + (1.0 - LOSS_EMA_DECAY) * loss,
            });
        }
        if config.log_every > 0 && iteration % config.log_every == 0 {
            report.log.push((iteration, ema.unwrap_or(0.0)));
        }
    }
    if report.examples > 0 {
        report.mean_loss = total / report.examples as f64;
    }
    Ok(report)
}

/// `max |ŷ_a − q|` over every step `t ≤ last_step` and every reachable `X_{t+1} = x`,
/// scoring the revealed token `a = x_{i_t}`.
pub fn max_oracle_error<D: Denoiser + ?Sized>(model: &D, oracle: &ExactOracle, last_step: usize) -> Result<f64> {
    let schedule = oracle.schedule();
    let mut worst: f64 = 0.0;
    for t in 0..=last_step.min(schedule.horizon().saturating_sub(1)) {
        let position = schedule.position(t)?;
        let reachable = oracle.marginal(t + 1);
        for idx in 0..reachable.num_states() {
            if reachable.probs()[idx] <= 0.0 {
                continue;
            }
            let x = reachable.sequence(idx);
            let masked = x.mask(position);
            let a = x.get(position);
            let err = (model.predict(&masked, t)?.get(a) - oracle.predict(&masked, t)?.get(a)).abs();
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{TokenAlphabet, OMEGA};

    #[test]
    fn example_labels() {
        let alphabet = TokenAlphabet::new(2).unwrap();
        let x = TokenSequence::new(vec![0, 1], alphabet).unwrap();
        let stay = ForwardTriple { x_t: x.clone(), z_t: NoiseDraw::Stay, x_next: x.clone(), t: 1, position: 1 };
        let ex = make_train_example(&stay);
        assert!(!ex.label);
        assert_eq!(ex.masked.entries(), &[0, OMEGA]);
        assert_eq!(ex.masked.masked_position(), 1);

        let y = TokenSequence::new(vec![1, 1], alphabet).unwrap();
        let drawn = ForwardTriple { x_t: x, z_t: NoiseDraw::Token(1), x_next: y, t: 0, position: 0 };
        let ex = make_train_example(&drawn);
        assert!(ex.label);
        assert_eq!(ex.revealed, 1);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.8, true).unwrap() - 0.223_143_551_314_209_7).abs() < 1e-15);
        assert!((bce_loss(0.8, false).unwrap() - 1.609_437_912_434_100_3).abs() < 1e-12);
        assert_eq!(bce_loss(0.5, true).unwrap(), std::f64::consts::LN_2);
        assert_eq!(bce_loss(0.5, false).unwrap(), std::f64::consts::LN_2);
        assert!(matches!(bce_loss(0.0, true), Err(GgmError::NumericGuard(_))));
        assert!(matches!(bce_loss(1.0, false), Err(GgmError::NumericGuard(_))));
        assert!(bce_loss(clamp_prediction(1.0), false).unwrap().is_finite());
    }

    #[test]
    fn inversion_examples() {
        let noise = NoiseDistribution::uniform(2, 0.5).unwrap();
        let signal_certain = 0.25 / (0.25 + 0.5);
        let out = DenoiserOutput::new(vec![1.0, signal_certain]).unwrap();
        let scores = invert_posterior(&out, &noise).unwrap();
        assert_eq!(scores[0], 0.0);
        assert!((scores[1] - 1.0).abs() < 1e-15);

        let worked = DenoiserOutput::new(vec![3.0 / 7.0, 0.5]).unwrap();
        let scores = invert_posterior(&worked, &noise).unwrap();
        assert!((scores[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inversion_needs_positive_stay() {
        let noise = NoiseDistribution::uniform(2, 0.0).unwrap();
        let out = DenoiserOutput::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(invert_posterior(&out, &noise), Err(GgmError::Domain(_))));
    }

    #[test]
    fn zero_prediction_is_floored() {
        let noise = NoiseDistribution::uniform(2, 0.5).unwrap();
        let out = DenoiserOutput::new(vec![0.0, 0.5]).unwrap();
        let scores = invert_posterior(&out, &noise).unwrap();
        assert!(scores[0].is_finite() && scores[0] > 0.0);
    }

    #[test]
    fn trained_step_shim() {
        // T = 12, L = 3: steps 0..=10 trained; 11 maps to 8 (same position).
        assert_eq!(trained_step(5, 12, 3), 5);
        assert_eq!(trained_step(10, 12, 3), 10);
        assert_eq!(trained_step(11, 12, 3), 8);
        // T = 2: only t = 0 trained, t = 1 has no earlier step on its position
        assert_eq!(trained_step(1, 2, 2), 0);
        assert_eq!(trained_step(1, 2, 1), 0);
    }
}
