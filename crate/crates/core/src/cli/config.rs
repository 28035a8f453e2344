//! Experiment configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alphabet::Token;
use crate::analysis::Method;
use crate::error::{GgmError, Result};
use crate::joint::JointDistribution;
use crate::noise::{build_unigram_noise, NoiseDistribution, NoiseSequence};
use crate::reverse::{theorem1_min_steps, Prompt, SamplerConfig};
use crate::schedule::ScanSchedule;

/// Version stamped into every output file.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_STAY_PROB: f64 = 0.5;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_ITERATIONS: usize = 200_000;
pub const DEFAULT_LOG_EVERY: usize = 1000;
pub const DEFAULT_VOCAB: usize = 2;
pub const DEFAULT_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TokenSpec {
    #[default]
    Uniform,
    /// A JSON array of per-token counts.
    Unigram { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// Exponential weights from the instance seed.
    #[default]
    Random,
    Uniform,
    PointMass { point: Vec<Token> },
    AntiCorrelated,
    Ising { beta: f64 },
}

impl InstanceSpec {
    pub fn parse_name(name: &str) -> Result<Self> {
        Ok(match name {
            "random" => InstanceSpec::Random,
            "uniform" => InstanceSpec::Uniform,
            "anti-correlated" => InstanceSpec::AntiCorrelated,
            "ising" => InstanceSpec::Ising { beta: 1.0 },
            other => {
                return Err(GgmError::InvalidConfig(format!(
                    "unknown preset {other:?} (point-mass needs a config file)"
                )))
            }
        })
    }

    pub fn build(&self, len: usize, vocab: usize, seed: u64) -> Result<JointDistribution> {
        let binary = || {
            if vocab != 2 {
                Err(GgmError::InvalidConfig("this preset is defined for V = 2".into()))
            } else {
                Ok(())
            }
        };
        match self {
            InstanceSpec::Random => JointDistribution::random(len, vocab, seed),
            InstanceSpec::Uniform => JointDistribution::uniform(len, vocab),
            InstanceSpec::PointMass { point } => {
                if point.len() != len {
                    return Err(GgmError::InvalidConfig(format!("point of length {} for L = {len}", point.len())));
                }
                JointDistribution::point_mass(point, vocab)
            }
            InstanceSpec::AntiCorrelated => {
                binary()?;
                JointDistribution::anti_correlated(len)
            }
            InstanceSpec::Ising { beta } => {
                binary()?;
                JointDistribution::ising_chain(len, *beta)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Oracle,
    Tabular,
    Logistic,
}

impl std::str::FromStr for ModelKind {
    type Err = GgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ModelKind::Oracle),
            "tabular" => Ok(ModelKind::Tabular),
            "logistic" => Ok(ModelKind::Logistic),
            other => Err(GgmError::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

/// The on-disk configuration. Unset fields take defaults during resolution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocab: Option<usize>,
    pub len: Option<usize>,
    pub horizon: Option<usize>,
    pub stay_prob: Option<f64>,
    pub tokens: TokenSpec,
    pub permutation: Option<Vec<usize>>,
    pub model_kind: Option<ModelKind>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    /// Seed for random instances; defaults to `seed`.
    pub instance_seed: Option<u64>,
    pub sampler: SamplerConfig,
    pub delta: Option<f64>,
    pub samples: Option<usize>,
    pub iterations: Option<usize>,
    pub timesteps_per_example: Option<usize>,
    pub log_every: Option<usize>,
    pub sweeps: Option<Vec<usize>>,
    pub instance: Option<InstanceSpec>,
    pub instance_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub prompt: Option<Prompt>,
    pub prompt_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| GgmError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Parses `--sweeps`: `"a,b,c"` is an explicit list, a single `n` means `1..=n`.
pub fn parse_sweeps(text: &str) -> Result<Vec<usize>> {
    let bad = |_| GgmError::InvalidConfig(format!("cannot parse sweeps {text:?}"));
    if text.contains(',') {
        text.split(',').map(|s| s.trim().parse::<usize>().map_err(bad)).collect()
    } else {
        let n: usize = text.trim().parse().map_err(bad)?;
        Ok((1..=n).collect())
    }
}

/// Everything a command needs, with defaults filled in. Serialized into outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub command: String,
    pub vocab: usize,
    pub len: usize,
    pub horizon: usize,
    pub stay_prob: f64,
    pub token_probs: Vec<f64>,
    pub permutation: Vec<usize>,
    pub model_kind: Option<ModelKind>,
    pub method: Method,
    pub seed: u64,
    pub instance_seed: u64,
    pub sampler: SamplerConfig,
    pub delta: f64,
    pub samples: usize,
    pub iterations: usize,
    pub timesteps_per_example: usize,
    pub log_every: usize,
    pub sweeps: Vec<usize>,
    pub instance: Option<InstanceSpec>,
    pub instance_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub prompt: Option<Prompt>,
}

impl ResolvedConfig {
    pub fn schedule(&self) -> Result<ScanSchedule> {
        ScanSchedule::new(self.permutation.clone(), self.horizon)
    }

    pub fn noise(&self) -> Result<NoiseSequence> {
        Ok(NoiseSequence::constant(NoiseDistribution::new(self.stay_prob, self.token_probs.clone())?))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Shape information discovered from input files.
#[derive(Debug, Clone, Copy, Default)]
pub struct KnownShape {
    pub vocab: Option<usize>,
    pub len: Option<usize>,
    pub horizon: Option<usize>,
}

fn agree(what: &str, configured: Option<usize>, found: Option<usize>) -> Result<Option<usize>> {
    match (configured, found) {
        (Some(c), Some(f)) if c != f => Err(GgmError::InvalidConfig(format!(
            "configured {what} = {c} but the input file has {what} = {f}"
        ))),
        (c, f) => Ok(c.or(f)),
    }
}

fn read_counts(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GgmError::InvalidConfig(format!("unigram counts {}: {e}", path.display())))
}

pub fn resolve(config: &ExperimentConfig, command: &str, shape: KnownShape) -> Result<ResolvedConfig> {
    let vocab = agree("V", config.vocab, shape.vocab)?.unwrap_or(DEFAULT_VOCAB);
    let len = agree("L", config.len, shape.len)?.unwrap_or(DEFAULT_LEN);
    if vocab == 0 || len == 0 {
        return Err(GgmError::InvalidConfig("V and L must be positive".into()));
    }
    let stay_prob = config.stay_prob.unwrap_or(DEFAULT_STAY_PROB);
    if !(stay_prob > 0.0 && stay_prob < 1.0) {
        return Err(GgmError::InvalidConfig(format!("stay probability {stay_prob} must lie in (0, 1)")));
    }
    let noise = match &config.tokens {
        TokenSpec::Uniform => NoiseDistribution::uniform(vocab, stay_prob)?,
        TokenSpec::Unigram { path } => {
            let counts = read_counts(path)?;
            if counts.len() != vocab {
                return Err(GgmError::InvalidConfig(format!("{} unigram counts for V = {vocab}", counts.len())));
            }
            build_unigram_noise(&counts, stay_prob)?
        }
    };
    let delta = config.delta.unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0) {
        return Err(GgmError::InvalidConfig(format!("δ = {delta} must be positive")));
    }
    let horizon = match config.horizon.or(shape.horizon) {
        Some(t) => t,
        None => theorem1_min_steps(len, 1.0 - stay_prob, delta)?,
    };
    let permutation = config.permutation.clone().unwrap_or_else(|| (0..len).collect());
    ScanSchedule::new(permutation.clone(), horizon).map_err(|e| GgmError::InvalidConfig(e.to_string()))?;
    config.sampler.validate()?;
    let seed = config.seed.unwrap_or(0);
    let sweeps = config.sweeps.clone().unwrap_or_else(|| (0..=8).collect());
    if sweeps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GgmError::InvalidConfig("sweeps must be strictly increasing".into()));
    }
    Ok(ResolvedConfig {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        vocab,
        len,
        horizon,
        stay_prob,
        token_probs: noise.token_probs().to_vec(),
        permutation,
        model_kind: config.model_kind,
        method: config.method.unwrap_or(Method::Ggm),
        seed,
        instance_seed: config.instance_seed.unwrap_or(seed),
        sampler: config.sampler,
        delta,
        samples: config.samples.unwrap_or(DEFAULT_SAMPLES),
        iterations: config.iterations.unwrap_or(DEFAULT_ITERATIONS),
        timesteps_per_example: config.timesteps_per_example.unwrap_or(1).max(1),
        log_every: config.log_every.unwrap_or(DEFAULT_LOG_EVERY),
        sweeps,
        instance: config.instance.clone(),
        instance_path: config.instance_path.clone(),
        model_path: config.model_path.clone(),
        prompt: config.prompt.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let r = resolve(&ExperimentConfig::default(), "sample", KnownShape::default()).unwrap();
        assert_eq!((r.vocab, r.len, r.stay_prob), (2, 3, 0.5));
        assert_eq!(r.horizon, theorem1_min_steps(3, 0.5, 0.05).unwrap());
        assert_eq!(r.permutation, vec![0, 1, 2]);
        assert_eq!(r.token_probs, vec![0.5, 0.5]);
    }

    #[test]
    fn file_shape_must_agree() {
        let config = ExperimentConfig { vocab: Some(3), ..Default::default() };
        let shape = KnownShape { vocab: Some(2), len: Some(2), horizon: None };
        assert!(matches!(resolve(&config, "x", shape), Err(GgmError::InvalidConfig(_))));
    }

    #[test]
    fn sweeps_parsing() {
        assert_eq!(parse_sweeps("3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_sweeps("0, 2,5").unwrap(), vec![0, 2, 5]);
        assert!(parse_sweeps("x").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"vocabulary": 3}"#).is_err());
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"instance": {"preset": "point-mass", "point": [1, 0]}, "sampler": {"top_p": 0.9}}"#)
                .unwrap();
        assert_eq!(c.instance, Some(InstanceSpec::PointMass { point: vec![1, 0] }));
        assert_eq!(c.sampler.top_p, 0.9);
        assert_eq!(c.sampler.temperature, 1.0);
    }
}
