//! Distances, goodness of fit, likelihood metrics and convergence curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::alphabet::TokenSequence;
use crate::baseline::{gibbs_propagate_exact, ExactConditional};
use crate::classifier::ExactOracle;
use crate::error::{GgmError, Result};
use crate::forward::lemma1_bound;
use crate::joint::{encode, JointDistribution};
use crate::noise::NoiseSequence;
use crate::reverse::{reverse_propagate_exact, SamplerConfig};
use crate::schedule::ScanSchedule;

/// Minimum expected count per chi-square bin before pooling.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

fn check_same_shape(p: &JointDistribution, q: &JointDistribution) -> Result<()> {
    if p.len() != q.len() || p.vocab_size() != q.vocab_size() {
        return Err(GgmError::ShapeMismatch(format!(
            "{}^{} vs {}^{}",
            p.vocab_size(),
            p.len(),
            q.vocab_size(),
            q.len()
        )));
    }
    Ok(())
}

/// `½ Σ_x |P(x) − Q(x)|`.
pub fn tv_distance(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    check_same_shape(p, q)?;
    let half_l1 = 0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(half_l1.min(1.0))
}

fn check_samples(samples: &[TokenSequence], len: usize, vocab: usize) -> Result<()> {
    for s in samples {
        if s.len() != len {
            return Err(GgmError::ShapeMismatch(format!("sample of length {} for length-{len} table", s.len())));
        }
        if s.as_slice().iter().any(|&tok| tok as usize >= vocab) {
            return Err(GgmError::InvalidInput("sample token outside the alphabet".into()));
        }
    }
    Ok(())
}

/// Visit counts per state.
pub fn state_counts(samples: &[TokenSequence], len: usize, vocab: usize, cap: usize) -> Result<Vec<u64>> {
    let n = crate::joint::state_count(vocab, len, cap)?;
    check_samples(samples, len, vocab)?;
    let mut counts = vec![0u64; n];
    for s in samples {
        counts[encode(s.as_slice(), vocab)] += 1;
    }
    Ok(counts)
}

/// Relative frequencies of `samples` as a table.
pub fn empirical_distribution(samples: &[TokenSequence], len: usize, vocab: usize) -> Result<JointDistribution> {
    if samples.is_empty() {
        return Err(GgmError::InsufficientSamples("empirical distribution of zero samples".into()));
    }
    let counts = state_counts(samples, len, vocab, crate::joint::DEFAULT_STATE_CAP)?;
    let n = samples.len() as f64;
    Ok(JointDistribution::from_parts(len, vocab, counts.into_iter().map(|c| c as f64 / n).collect()))
}

/// The target read autoregressively: `P(x_l | x_{<l})` from prefix marginals.
#[derive(Debug, Clone)]
pub struct AutoregressiveEvaluator {
    len: usize,
    vocab: usize,
    /// `prefixes[l]` is the marginal table of `x_{≤l}` (0-based `l`).
    prefixes: Vec<Vec<f64>>,
    floor: Option<f64>,
}

impl AutoregressiveEvaluator {
    pub fn new(target: &JointDistribution) -> Self {
        let prefixes = (1..=target.len()).map(|l| target.prefix_marginal(l)).collect();
        Self { len: target.len(), vocab: target.vocab_size(), prefixes, floor: None }
    }

    /// Replace zero (or undefined) conditionals by `floor` instead of failing.
    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(GgmError::InvalidInput(format!("floor {floor} must lie in (0, 1]")));
        }
        self.floor = Some(floor);
        Ok(self)
    }

    /// `P(x_l | x_{<l})`, 0-based `l ≥ 1`.
    pub fn conditional(&self, x: &[crate::alphabet::Token], l: usize) -> Result<f64> {
        let head = encode(&x[..l], self.vocab);
        let joint = self.prefixes[l][head * self.vocab + x[l] as usize];
        let context = self.prefixes[l - 1][head];
        let p = if context > 0.0 { joint / context } else { 0.0 };
        match (p > 0.0, self.floor) {
            (true, _) => Ok(p),
            (false, Some(floor)) => Ok(floor),
            (false, None) => Err(GgmError::UndefinedConditional(format!(
                "P(x_{l} = {} | x_<{l} = {:?}) is zero",
                x[l],
                &x[..l]
            ))),
        }
    }

    /// `−(1/L) Σ_{l=2}^{L} log P(x_l | x_{<l})` (1-based `l`; the first token is not scored).
    pub fn nll(&self, x: &TokenSequence) -> Result<f64> {
        if x.len() != self.len {
            return Err(GgmError::ShapeMismatch(format!("sequence of length {} for length {}", x.len(), self.len)));
        }
        let mut total = 0.0;
        for l in 1..self.len {
            total -= self.conditional(x.as_slice(), l)?.ln();
        }
        Ok(total / self.len as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub mean_nll: f64,
    /// `(1/B) Σ exp(NLL(x⁽ⁱ⁾))`, which is not `exp(mean_nll)`.
    pub mean_ppl: f64,
    pub per_sequence_nll: Vec<f64>,
}

/// Batch NLL and perplexity of `samples` under the target.
pub fn nll_and_ppl(samples: &[TokenSequence], evaluator: &AutoregressiveEvaluator) -> Result<LikelihoodReport> {
    if samples.is_empty() {
        return Err(GgmError::InsufficientSamples("likelihood of an empty batch".into()));
    }
    let per_sequence_nll = samples.par_iter().map(|x| evaluator.nll(x)).collect::<Result<Vec<_>>>()?;
    let b = samples.len() as f64;
    let mean_nll = per_sequence_nll.iter().sum::<f64>() / b;
    let mean_ppl = per_sequence_nll.iter().map(|v| v.exp()).sum::<f64>() / b;
    Ok(LikelihoodReport { mean_nll, mean_ppl, per_sequence_nll })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    /// Upper-tail probability `P(χ² ≥ statistic)`.
    pub p_value: f64,
    /// `2·min(F, 1 − F)`.
    pub two_sided: f64,
    pub bins: usize,
    pub samples: usize,
}

/// Pearson goodness of fit of `samples` against `p`.
///
/// States with expected count below [`CHI_SQUARE_MIN_EXPECTED`] are pooled into
/// one bin; if that bin is still too small it is merged into the smallest
/// remaining bin.
pub fn chi_square_gof(samples: &[TokenSequence], p: &JointDistribution) -> Result<ChiSquareReport> {
    let n = samples.len();
    if n == 0 {
        return Err(GgmError::InsufficientSamples("chi-square test on zero samples".into()));
    }
    let counts = state_counts(samples, p.len(), p.vocab_size(), usize::MAX)?;
    let nf = n as f64;

    // (expected, observed) per bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&prob, &count) in p.probs().iter().zip(&counts) {
        let expected = nf * prob;
        if expected >= CHI_SQUARE_MIN_EXPECTED {
            bins.push((expected, count as f64));
        } else {
            pooled.0 += expected;
            pooled.1 += count as f64;
        }
    }
    if pooled.0 > 0.0 || pooled.1 > 0.0 {
        if pooled.0 >= CHI_SQUARE_MIN_EXPECTED || bins.is_empty() {
            bins.push(pooled);
        } else {
            let smallest = bins
                .iter_mut()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty");
            smallest.0 += pooled.0;
            smallest.1 += pooled.1;
        }
    }
    if bins.len() == 1 && bins[0].0 < CHI_SQUARE_MIN_EXPECTED && p.num_states() > 1 {
        return Err(GgmError::InsufficientSamples(format!(
            "{n} samples leave no bin with expected count ≥ {CHI_SQUARE_MIN_EXPECTED}"
        )));
    }

    let dof = bins.len().saturating_sub(1);
    if bins.iter().any(|&(e, o)| e == 0.0 && o > 0.0) {
        return Ok(ChiSquareReport { statistic: f64::INFINITY, dof, p_value: 0.0, two_sided: 0.0, bins: bins.len(), samples: n });
    }
    let statistic: f64 = bins.iter().filter(|b| b.0 > 0.0).map(|&(e, o)| (o - e) * (o - e) / e).sum();
    if dof == 0 {
        return Ok(ChiSquareReport { statistic, dof, p_value: 1.0, two_sided: 1.0, bins: bins.len(), samples: n });
    }
    let law = ChiSquared::new(dof as f64).map_err(|e| GgmError::NumericGuard(e.to_string()))?;
    let upper = law.sf(statistic);
    let lower = law.cdf(statistic);
    Ok(ChiSquareReport {
        statistic,
        dof,
        p_value: upper,
        two_sided: (2.0 * upper.min(lower)).min(1.0),
        bins: bins.len(),
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ggm,
    Gibbs,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ggm => "ggm",
            Method::Gibbs => "gibbs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: Method,
    /// Sweeps `K`.
    #[serde(rename = "K")]
    pub sweeps: usize,
    /// Steps `T = K·L`.
    #[serde(rename = "T")]
    pub steps: usize,
    pub tv: f64,
    /// `min(1, L(1−p)^K)` for GGM; absent for Gibbs.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub instance: String,
    pub points: Vec<CurvePoint>,
}

impl ConvergenceCurve {
    /// Every point with a bound satisfies `tv ≤ bound + tol`.
    pub fn within_envelope(&self, tol: f64) -> bool {
        self.points.iter().all(|pt| pt.bound.map_or(true, |b| pt.tv <= b + tol))
    }

    pub const CSV_HEADER: &'static str = "method,K,T,tv,bound";

    /// Data rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for pt in &self.points {
            let bound = pt.bound.map(fmt_f64).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", pt.method.tag(), pt.sweeps, pt.steps, fmt_f64(pt.tv), bound));
        }
        out
    }
}

/// Shortest round-trip decimal form, as in the JSON outputs.
pub fn fmt_f64(value: f64) -> String {
    serde_json::to_string(&value).unwrap_or_else(|_| value.to_string())
}

/// Exact TV to the target after each `K` in `sweeps` (strictly increasing),
/// both methods starting from `Π(·|X)^⊗L`.
///
/// GGM runs `T = K·L` reverse steps with the exact oracle for that horizon;
/// Gibbs runs `K` sweeps of the exact conditional kernel.
pub fn convergence_curve(
    method: Method,
    target: &JointDistribution,
    schedule: &ScanSchedule,
    noise: &NoiseSequence,
    sweeps: &[usize],
    instance: &str,
) -> Result<ConvergenceCurve> {
    if sweeps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GgmError::InvalidInput("sweep counts must be strictly increasing".into()));
    }
    let len = target.len();
    let mut points = Vec::with_capacity(sweeps.len());
    match method {
        Method::Ggm => {
            for &k in sweeps {
                let steps = k * len;
                let schedule = schedule.with_horizon(steps);
                let oracle = ExactOracle::new(target, &schedule, noise)?;
                let init = JointDistribution::product(noise.at(steps).token_probs(), len)?;
                let out = reverse_propagate_exact(&oracle, &schedule, noise, &SamplerConfig::default(), &init)?;
                let redraw = 1.0 - noise.max_stay_prob(steps);
                let bound = if redraw > 0.0 { lemma1_bound(len, redraw, steps)? } else { 1.0 };
                points.push(CurvePoint { method, sweeps: k, steps, tv: tv_distance(&out, target)?, bound: Some(bound) });
            }
        }
        Method::Gibbs => {
            let model = ExactConditional::new(target.clone(), noise.at(0))?;
            let mut current = JointDistribution::product(noise.at(0).token_probs(), len)?;
            let mut done = 0;
            for &k in sweeps {
                current = gibbs_propagate_exact(&model, schedule, &current, k - done)?;
                done = k;
                points.push(CurvePoint { method, sweeps: k, steps: k * len, tv: tv_distance(&current, target)?, bound: None });
            }
            if model.fallback_count() > 0 {
                log::info!("gibbs curve used the fallback law {} times", model.fallback_count());
            }
        }
    }
    Ok(ConvergenceCurve { instance: instance.to_string(), points })
}
