//! Forward noising: one scheduled position per step.
//!
//! At step `t` a draw `Z_t ∼ Π_t` either leaves position `i_t` alone (`φ`) or
//! overwrites it with a token from `Π_t(·|X)`. Besides sequential simulation
//! this module samples `X_t` directly from `X_0` and pushes whole tables
//! through the kernel for exact checks.

use rand::Rng;

use crate::alphabet::{Token, TokenSequence};
use crate::error::{GgmError, Result};
use crate::joint::JointDistribution;
use crate::noise::{NoiseDistribution, NoiseDraw, NoiseSequence};
use crate::schedule::ScanSchedule;

/// `(X_t, Z_t, X_{t+1})` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTriple {
    pub x_t: TokenSequence,
    pub z_t: NoiseDraw,
    pub x_next: TokenSequence,
    pub t: usize,
    /// `i_t`.
    pub position: usize,
}

fn check_lengths(x: &TokenSequence, schedule: &ScanSchedule, noise: &NoiseSequence) -> Result<()> {
    if x.len() != schedule.len() {
        return Err(GgmError::ShapeMismatch(format!(
            "sequence length {} vs schedule length {}",
            x.len(),
            schedule.len()
        )));
    }
    if let Some(&bad) = x.as_slice().iter().find(|&&tok| tok as usize >= noise.vocab_size()) {
        return Err(GgmError::InvalidInput(format!("token {bad} outside noise vocabulary")));
    }
    Ok(())
}

/// One step of the forward chain from `x_t`.
pub fn forward_step<R: Rng + ?Sized>(
    x_t: &TokenSequence,
    t: usize,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    rng: &mut R,
) -> Result<ForwardTriple> {
    check_lengths(x_t, schedule, noise)?;
    let position = schedule.position(t)?;
    Ok(noise_once(x_t.clone(), t, position, noise.at(t), rng))
}

fn noise_once<R: Rng + ?Sized>(
    x_t: TokenSequence,
    t: usize,
    position: usize,
    noise: &NoiseDistribution,
    rng: &mut R,
) -> ForwardTriple {
    let z_t = noise.draw(rng);
    let mut x_next = x_t.clone();
    if let NoiseDraw::Token(tok) = z_t {
        x_next.set(position, tok);
    }
    ForwardTriple { x_t, z_t, x_next, t, position }
}

/// Probability that position `j` was redrawn from `Π(·|X)` at least once in
/// steps `0..t`: `1 − Π_{s ∈ τ_t(j)} Π_s(φ)`.
pub fn flip_probability(position: usize, t: usize, schedule: &ScanSchedule, noise: &NoiseSequence) -> Result<f64> {
    if position >= schedule.len() {
        return Err(GgmError::OutOfRange { what: "position", value: position, bound: schedule.len() });
    }
    if t > schedule.horizon() {
        return Err(GgmError::OutOfRange { what: "step", value: t, bound: schedule.horizon() + 1 });
    }
    let keep: f64 = schedule.visits(position, t).into_iter().map(|s| noise.at(s).stay_prob()).product();
    Ok(1.0 - keep)
}

/// [`flip_probability`] for every position, from a single pass over `0..t`.
pub fn flip_probabilities(t: usize, schedule: &ScanSchedule, noise: &NoiseSequence) -> Vec<f64> {
    let mut keep = vec![1.0; schedule.len()];
    for s in 0..t {
        keep[schedule.position_unchecked(s)] *= noise.at(s).stay_prob();
    }
    keep.into_iter().map(|k| 1.0 - k).collect()
}

/// Samples `X_t` straight from `x0`, then noises one more step for `(Z_t, X_{t+1})`.
///
/// Requires `Π_s(·|X)` to be the same for all `s < t`; the stay probability may vary.
pub fn forward_sample_direct<R: Rng + ?Sized>(
    x0: &TokenSequence,
    t: usize,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    rng: &mut R,
) -> Result<ForwardTriple> {
    check_lengths(x0, schedule, noise)?;
    let position = schedule.position(t)?;
    if t > 0 && !noise.token_law_constant_through(t - 1) {
        return Err(GgmError::Unsupported(
            "direct forward sampling needs a time-constant token distribution".into(),
        ));
    }
    let token_law = noise.at(0);
    let mut x_t = x0.clone();
    for (j, p) in flip_probabilities(t, schedule, noise).into_iter().enumerate() {
        if p > 0.0 && rng.gen::<f64>() < p {
            x_t.set(j, token_law.draw_token(rng));
        }
    }
    Ok(noise_once(x_t, t, position, noise.at(t), rng))
}

/// Pushes a table through the step kernel at `position` with law `noise`.
pub fn forward_kernel(p: &JointDistribution, position: usize, noise: &NoiseDistribution) -> JointDistribution {
    let vocab = p.vocab_size();
    let stride = p.stride(position);
    let src = p.probs();
    let mut out = vec![0.0; src.len()];
    let stay = noise.stay_prob();
    for base in p.fiber_bases(position) {
        let fiber_mass: f64 = (0..vocab).map(|a| src[base + a * stride]).sum();
        for a in 0..vocab {
            let idx = base + a * stride;
            out[idx] = stay * src[idx] + noise.token_mass(a as Token) * fiber_mass;
        }
    }
    JointDistribution::from_parts(p.len(), vocab, out)
}

fn check_table(p: &JointDistribution, schedule: &ScanSchedule, noise: &NoiseSequence) -> Result<()> {
    if p.len() != schedule.len() || p.vocab_size() != noise.vocab_size() {
        return Err(GgmError::ShapeMismatch(format!(
            "table is {}^{}, schedule length {}, noise vocabulary {}",
            p.vocab_size(),
            p.len(),
            schedule.len(),
            noise.vocab_size()
        )));
    }
    Ok(())
}

/// `P_t`, by applying the kernel for steps `0..t`.
pub fn forward_propagate_exact(
    p_star: &JointDistribution,
    t: usize,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
) -> Result<JointDistribution> {
    Ok(forward_marginals(p_star, t, schedule, noise)?.pop().expect("at least P_0"))
}

/// `[P_0, P_1, …, P_t]`.
pub fn forward_marginals(
    p_star: &JointDistribution,
    t: usize,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
) -> Result<Vec<JointDistribution>> {
    check_table(p_star, schedule, noise)?;
    if t > schedule.horizon() {
        return Err(GgmError::OutOfRange { what: "step", value: t, bound: schedule.horizon() + 1 });
    }
    let mut out = Vec::with_capacity(t + 1);
    out.push(p_star.clone());
    for s in 0..t {
        let next = forward_kernel(&out[s], schedule.position_unchecked(s), noise.at(s));
        out.push(next);
    }
    Ok(out)
}

/// `min(1, L·(1−ε)^⌊T/L⌋)`: bound on the distance of `X_T` from `Π(·|X)^⊗L`.
pub fn lemma1_bound(len: usize, eps: f64, horizon: usize) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(GgmError::InvalidInput(format!("ε = {eps} must lie in (0, 1]")));
    }
    if len == 0 {
        return Err(GgmError::InvalidInput("sequence length must be positive".into()));
    }
    let sweeps = (horizon / len) as i32;
    Ok((len as f64 * (1.0 - eps).powi(sweeps)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::TokenAlphabet;
    use crate::rng::RngStream;

    fn seq(tokens: &[Token], vocab: usize) -> TokenSequence {
        TokenSequence::new(tokens.to_vec(), TokenAlphabet::new(vocab).unwrap()).unwrap()
    }

    fn constant(stay: f64, vocab: usize) -> NoiseSequence {
        NoiseSequence::constant(NoiseDistribution::uniform(vocab, stay).unwrap())
    }

    #[test]
    fn no_noise_keeps_sequence() {
        let schedule = ScanSchedule::identity(3, 6).unwrap();
        let noise = constant(1.0, 3);
        let x = seq(&[2, 0, 1], 3);
        let mut rng = RngStream::new(1);
        for t in 0..6 {
            let triple = forward_step(&x, t, &schedule, &noise, &mut rng).unwrap();
            assert_eq!(triple.z_t, NoiseDraw::Stay);
            assert_eq!(triple.x_next, x);
        }
    }

    #[test]
    fn single_token_alphabet_forces_draw() {
        let schedule = ScanSchedule::identity(2, 2).unwrap();
        let noise = constant(0.0, 1);
        let x = seq(&[0, 0], 1);
        let triple = forward_step(&x, 1, &schedule, &noise, &mut RngStream::new(0)).unwrap();
        assert_eq!(triple.z_t, NoiseDraw::Token(0));
        assert_eq!(triple.x_next.get(1), 0);
    }

    #[test]
    fn step_case_split_matches_kernel() {
        // x_t = (A, B), i_t = 0, Π(φ) = 0.5, Π(A) = Π(B) = 0.25.
        let p = JointDistribution::point_mass(&[0, 1], 2).unwrap();
        let next = forward_kernel(&p, 0, &NoiseDistribution::uniform(2, 0.5).unwrap());
        assert!((next.prob(&[0, 1]) - 0.75).abs() < 1e-15);
        assert!((next.prob(&[1, 1]) - 0.25).abs() < 1e-15);

        let schedule = ScanSchedule::identity(2, 1).unwrap();
        let noise = constant(0.5, 2);
        let x = seq(&[0, 1], 2);
        let mut rng = RngStream::new(5);
        let n = 100_000;
        let flipped = (0..n)
            .filter(|_| forward_step(&x, 0, &schedule, &noise, &mut rng).unwrap().x_next.get(0) == 1)
            .count() as f64
            / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((flipped - 0.25).abs() < 3.0 * sigma, "{flipped}");
    }

    #[test]
    fn flip_probability_examples() {
        let schedule = ScanSchedule::identity(3, 7).unwrap();
        let half = constant(0.5, 2);
        assert_eq!(flip_probability(2, 2, &schedule, &half).unwrap(), 0.0);
        assert_eq!(flip_probability(0, 4, &schedule, &half).unwrap(), 0.75);

        // τ = {0, 3} with Π_0(φ) = 0.9, Π_3(φ) = 0.6.
        let stays = [0.9, 0.5, 0.5, 0.6, 0.5];
        let noise = NoiseSequence::per_step(
            stays.iter().map(|&s| NoiseDistribution::uniform(2, s).unwrap()).collect(),
        )
        .unwrap();
        let p = flip_probability(0, 4, &schedule, &noise).unwrap();
        assert!((p - 0.46).abs() < 1e-15, "{p}");
        assert_eq!(flip_probabilities(4, &schedule, &noise)[0], p);
        assert!(flip_probability(3, 4, &schedule, &noise).is_err());
    }

    #[test]
    fn direct_sampling_edges() {
        let schedule = ScanSchedule::identity(3, 6).unwrap();
        let x0 = seq(&[1, 0, 1], 2);
        let mut rng = RngStream::new(3);
        let triple = forward_sample_direct(&x0, 0, &schedule, &constant(0.5, 2), &mut rng).unwrap();
        assert_eq!(triple.x_t, x0);
        let frozen = forward_sample_direct(&x0, 5, &schedule, &constant(1.0, 2), &mut rng).unwrap();
        assert_eq!(frozen.x_t, x0);
        assert_eq!(frozen.z_t, NoiseDraw::Stay);
        assert_eq!(frozen.x_next, x0);
    }

    #[test]
    fn direct_sampling_rejects_time_varying_tokens() {
        let schedule = ScanSchedule::identity(2, 4).unwrap();
        let noise = NoiseSequence::per_step(vec![
            NoiseDistribution::new(0.5, vec![0.5, 0.5]).unwrap(),
            NoiseDistribution::new(0.5, vec![0.9, 0.1]).unwrap(),
        ])
        .unwrap();
        let x0 = seq(&[0, 1], 2);
        let mut rng = RngStream::new(0);
        assert!(forward_sample_direct(&x0, 1, &schedule, &noise, &mut rng).is_ok());
        assert!(matches!(
            forward_sample_direct(&x0, 2, &schedule, &noise, &mut rng),
            Err(GgmError::Unsupported(_))
        ));
    }

    #[test]
    fn exact_propagation_examples() {
        let schedule = ScanSchedule::identity(2, 4).unwrap();
        let noise = constant(0.5, 2);
        let p_star = JointDistribution::new(2, 2, vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        assert_eq!(forward_propagate_exact(&p_star, 0, &schedule, &noise).unwrap(), p_star);
        let p1 = forward_propagate_exact(&p_star, 1, &schedule, &noise).unwrap();
        assert!((p1.prob(&[0, 0]) - 0.4375).abs() < 1e-15);
        assert!((p1.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let uniform = JointDistribution::uniform(2, 2).unwrap();
        for t in 0..=4 {
            let pt = forward_propagate_exact(&uniform, t, &schedule, &noise).unwrap();
            assert!(pt.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        }
        assert!(forward_propagate_exact(&uniform, 5, &schedule, &noise).is_err());
    }

    #[test]
    fn lemma1_examples() {
        assert_eq!(lemma1_bound(4, 0.5, 16).unwrap(), 0.25);
        assert_eq!(lemma1_bound(4, 0.5, 0).unwrap(), 1.0);
        assert_eq!(lemma1_bound(1024, 0.5, 4096).unwrap(), 1.0);
        assert!(lemma1_bound(4, 0.0, 16).is_err());
    }
}
