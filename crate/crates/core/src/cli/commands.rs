use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::alphabet::TokenSequence;
use crate::analysis::{
    chi_square_gof, convergence_curve, empirical_distribution, fmt_f64, nll_and_ppl, tv_distance, AutoregressiveEvaluator,
    ConvergenceCurve, Method,
};
use crate::baseline::{gibbs_many, ExactConditional};
use crate::classifier::{
    load_model, max_oracle_error, train, Denoiser, ExactOracle, LoadedModel, LogisticModel, ModelFile, TabularModel,
    TrainConfig, TrainReport,
};
use crate::cli::config::{resolve, ExperimentConfig, InstanceSpec, KnownShape, ModelKind, ResolvedConfig, SCHEMA_VERSION};
use crate::error::{GgmError, Result};
use crate::forward::lemma1_bound;
use crate::joint::JointDistribution;
use crate::reverse::{
    initial_distribution, reverse_propagate_exact, reverse_propagate_exact_conditional, sample_many, theorem1_min_steps,
    Prompt,
};
use crate::rng::RngStream;

/// Numerical slack when comparing exact TV values against certified bounds.
const ENVELOPE_TOL: f64 = 1e-12;
/// Largest residual of the exact reversal from P_T accepted by `certify` for the exact oracle.
const REVERSAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CertificationFailed,
}

fn out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn pretty(value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Reads a bare `{"L", "V", "probs"}` table or a `gen-instance` file wrapping one.
pub fn load_instance(path: &Path) -> Result<JointDistribution> {
    let text = fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text)?;
    if let Some(inner) = value.get_mut("instance") {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

fn load_prompt(config: &ExperimentConfig) -> Result<Option<Prompt>> {
    let raw = match (&config.prompt, &config.prompt_path) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            Some(serde_json::from_str::<Prompt>(&text)?)
        }
        (None, None) => None,
    };
    raw.map(|p| Prompt::new(p.positions().to_vec(), p.tokens().to_vec())).transpose()
}

fn model_shape(model: &LoadedModel) -> KnownShape {
    let (vocab, len, horizon) = match model {
        LoadedModel::Tabular(m) => (m.vocab(), m.len(), m.horizon()),
        LoadedModel::Logistic(m) => (m.vocab(), m.len(), m.horizon()),
    };
    KnownShape { vocab: Some(vocab), len: Some(len), horizon: Some(horizon) }
}

struct Inputs {
    resolved: ResolvedConfig,
    instance: Option<JointDistribution>,
    model: Option<LoadedModel>,
}

fn gather(config: &ExperimentConfig, command: &str, default_spec: Option<InstanceSpec>) -> Result<Inputs> {
    let file_instance = config.instance_path.as_deref().map(load_instance).transpose()?;
    let model = match &config.model_path {
        Some(path) => Some(load_model(&fs::read_to_string(path)?)?),
        None => None,
    };
    let mut shape = model.as_ref().map(model_shape).unwrap_or_default();
    if let Some(p) = &file_instance {
        if shape.vocab.is_some_and(|v| v != p.vocab_size()) || shape.len.is_some_and(|l| l != p.len()) {
            return Err(GgmError::InvalidConfig("model and instance shapes differ".into()));
        }
        shape.vocab = Some(p.vocab_size());
        shape.len = Some(p.len());
    }
    let mut config = config.clone();
    if config.instance.is_none() && file_instance.is_none() {
        config.instance = default_spec;
    }
    let resolved = resolve(&config, command, shape)?;
    let instance = match (file_instance, &resolved.instance) {
        (Some(p), _) => Some(p),
        (None, Some(spec)) => Some(spec.build(resolved.len, resolved.vocab, resolved.instance_seed)?),
        (None, None) => None,
    };
    Ok(Inputs { resolved, instance, model })
}

fn require_instance(inputs: &Inputs, command: &str) -> Result<JointDistribution> {
    inputs
        .instance
        .clone()
        .ok_or_else(|| GgmError::InvalidConfig(format!("{command} needs --instance or an instance preset")))
}

/// The denoiser to run: the exact oracle when requested or when no model file is given.
fn pick_denoiser(inputs: &Inputs, command: &str) -> Result<Box<dyn Denoiser>> {
    let r = &inputs.resolved;
    let want_oracle = matches!(r.model_kind, Some(ModelKind::Oracle)) || inputs.model.is_none();
    if want_oracle {
        let target = inputs.instance.as_ref().ok_or_else(|| {
            GgmError::InvalidConfig(format!("{command} needs --model, or an instance for the exact oracle"))
        })?;
        return Ok(Box::new(ExactOracle::new(target, &r.schedule()?, &r.noise()?)?));
    }
    let model = inputs.model.clone().expect("checked above");
    let kind_matches = match (&model, r.model_kind) {
        (_, None) => true,
        (LoadedModel::Tabular(_), Some(k)) => k == ModelKind::Tabular,
        (LoadedModel::Logistic(_), Some(k)) => k == ModelKind::Logistic,
    };
    if !kind_matches {
        return Err(GgmError::InvalidConfig("--model-kind disagrees with the model file".into()));
    }
    Ok(Box::new(model))
}

pub fn gen_instance(config: &ExperimentConfig) -> Result<Outcome> {
    let dir = out_dir(config)?;
    let inputs = gather(config, "gen-instance", Some(InstanceSpec::Random))?;
    let instance = require_instance(&inputs, "gen-instance")?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": inputs.resolved.to_json_value(),
        "instance": instance,
    });
    write(&dir.join("instance.json"), &pretty(&doc)?)?;
    Ok(Outcome::Success)
}

fn train_log_csv(resolved: &ResolvedConfig, report: &TrainReport, max_error: Option<f64>) -> Result<String> {
    let mut text = String::new();
    writeln!(text, "# schema_version={SCHEMA_VERSION}").unwrap();
    writeln!(text, "# config={}", serde_json::to_string(resolved)?).unwrap();
    text.push_str("iteration,loss_ema\n");
    for (iteration, loss) in &report.log {
        writeln!(text, "{iteration},{}", fmt_f64(*loss)).unwrap();
    }
    writeln!(text, "# examples={}", report.examples).unwrap();
    writeln!(text, "# mean_loss={}", fmt_f64(report.mean_loss)).unwrap();
    if let Some(err) = max_error {
        writeln!(text, "# max_abs_error_vs_oracle={}", fmt_f64(err)).unwrap();
    }
    Ok(text)
}

pub fn train_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    let dir = out_dir(config)?;
    let inputs = gather(config, "train", None)?;
    let target = require_instance(&inputs, "train")?;
    let r = &inputs.resolved;
    let schedule = r.schedule()?;
    let noise = r.noise()?;
    let train_config =
        TrainConfig { iterations: r.iterations, timesteps_per_example: r.timesteps_per_example, log_every: r.log_every };
    let mut rng = RngStream::new(r.seed);
    let oracle = ExactOracle::new(&target, &schedule, &noise)?;
    let last_trained = r.horizon.checked_sub(2);
    let (file, report, max_error) = match r.model_kind.unwrap_or(ModelKind::Tabular) {
        ModelKind::Oracle => return Err(GgmError::InvalidConfig("the oracle is not trainable".into())),
        ModelKind::Tabular => {
            let mut model = TabularModel::new(r.vocab, r.len, r.horizon)?;
            let report = train(&mut model, &target, &schedule, &noise, &train_config, &mut rng)?;
            let err = last_trained.map(|t| max_oracle_error(&model, &oracle, t)).transpose()?;
            (ModelFile::from_tabular(&model), report, err)
        }
        ModelKind::Logistic => {
            let mut model = LogisticModel::new(r.vocab, r.len, r.horizon)?;
            let report = train(&mut model, &target, &schedule, &noise, &train_config, &mut rng)?;
            let err = last_trained.map(|t| max_oracle_error(&model, &oracle, t)).transpose()?;
            (ModelFile::from_logistic(&model), report, err)
        }
    };
    let mut model_text = file.with_config(r.to_json_value()).to_json()?;
    model_text.push('\n');
    write(&dir.join("model.json"), &model_text)?;
    write(&dir.join("train_log.csv"), &train_log_csv(r, &report, max_error)?)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SampleLine<'a> {
    seed: u64,
    index: usize,
    tokens: &'a [u32],
    steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
}

fn jsonl(resolved: &ResolvedConfig, samples: &[TokenSequence], steps: usize, method: Method) -> Result<String> {
    let mut text = serde_json::to_string(&json!({
        "schema_version": SCHEMA_VERSION,
        "config": resolved.to_json_value(),
    }))?;
    text.push('\n');
    for (index, s) in samples.iter().enumerate() {
        let line = SampleLine {
            seed: resolved.seed,
            index,
            tokens: s.as_slice(),
            steps,
            method: (method == Method::Gibbs).then_some("gibbs"),
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }
    Ok(text)
}

/// `P*` restricted to sequences agreeing with the prompt, renormalized.
fn prompt_conditional(target: &JointDistribution, prompt: &Prompt) -> Result<JointDistribution> {
    let weights = (0..target.num_states())
        .map(|idx| {
            let x = target.decode(idx);
            let agrees = prompt.positions().iter().zip(prompt.tokens()).all(|(&p, &c)| x[p] == c);
            if agrees {
                target.probs()[idx]
            } else {
                0.0
            }
        })
        .collect();
    JointDistribution::from_weights(target.len(), target.vocab_size(), weights)
}

fn sample_metrics(
    resolved: &ResolvedConfig,
    target: &JointDistribution,
    samples: &[TokenSequence],
    prompt: Option<&Prompt>,
    exact_output: Option<&JointDistribution>,
) -> Result<Value> {
    let empirical = empirical_distribution(samples, target.len(), target.vocab_size())?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": resolved.to_json_value(),
        "samples": samples.len(),
        "tv_empirical": tv_distance(&empirical, target)?,
    });
    doc["chi_square"] = match chi_square_gof(samples, target) {
        Ok(report) => serde_json::to_value(report)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    doc["likelihood"] = match nll_and_ppl(samples, &AutoregressiveEvaluator::new(target)) {
        Ok(report) => json!({
            "evaluator": "exact chain-rule conditionals of the target (stands in for an external language model)",
            "mean_nll": report.mean_nll,
            "mean_ppl": report.mean_ppl,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    if let Some(prompt) = prompt {
        match prompt_conditional(target, prompt) {
            Ok(cond) => {
                doc["conditional_tv_empirical"] = json!(tv_distance(&empirical, &cond)?);
                if let Some(exact) = exact_output {
                    doc["conditional_tv_exact"] = json!(tv_distance(exact, &cond)?);
                }
            }
            Err(e) => doc["conditional_error"] = json!(e.to_string()),
        }
    }
    Ok(doc)
}

fn generate(config: &ExperimentConfig, command: &str, conditional: bool) -> Result<Outcome> {
    let dir = out_dir(config)?;
    let inputs = gather(config, command, None)?;
    let r = &inputs.resolved;
    let schedule = r.schedule()?;
    let noise = r.noise()?;
    let prompt = if conditional {
        let prompt = load_prompt(config)?
            .ok_or_else(|| GgmError::InvalidConfig("infill needs --prompt or a prompt in the config".into()))?;
        prompt.clamps(r.len, crate::alphabet::TokenAlphabet::new(r.vocab)?)?;
        prompt
    } else {
        Prompt::empty()
    };
    let root = RngStream::new(r.seed);

    let (samples, steps, exact) = match r.method {
        Method::Ggm => {
            let model = pick_denoiser(&inputs, command)?;
            let samples = sample_many(&model, &schedule, &noise, &r.sampler, &prompt, &root, r.samples)?;
            for s in &samples {
                for (&p, &c) in prompt.positions().iter().zip(prompt.tokens()) {
                    assert_eq!(s.get(p), c, "prompt position {p} was overwritten");
                }
            }
            let exact = match (&inputs.instance, conditional && r.sampler.is_neutral()) {
                (Some(_), true) => {
                    let init = initial_distribution(&noise, r.horizon, r.len, &prompt)?;
                    Some(reverse_propagate_exact_conditional(&model, &schedule, &noise, &r.sampler, &init, &prompt)?)
                }
                _ => None,
            };
            (samples, r.horizon, exact)
        }
        Method::Gibbs => {
            if conditional {
                return Err(GgmError::InvalidConfig("infill runs the reverse chain only".into()));
            }
            let target = require_instance(&inputs, command)?;
            let sweeps = config.sweeps.as_ref().and_then(|s| s.last().copied()).unwrap_or(r.horizon.div_ceil(r.len));
            let model = ExactConditional::new(target, noise.at(0))?;
            let samples = gibbs_many(sweeps, &model, &schedule, &r.sampler, &root, r.samples)?;
            if model.fallback_count() > 0 {
                log::warn!("{} Gibbs updates used the fallback law", model.fallback_count());
            }
            (samples, sweeps * r.len, None)
        }
    };

    let name = if conditional { "infill" } else { "samples" };
    write(&dir.join(format!("{name}.jsonl")), &jsonl(r, &samples, steps, r.method)?)?;
    if let Some(target) = &inputs.instance {
        if !samples.is_empty() {
            let metrics =
                sample_metrics(r, target, &samples, conditional.then_some(&prompt), exact.as_ref())?;
            write(&dir.join(format!("{name}_metrics.json")), &pretty(&metrics)?)?;
        }
    }
    Ok(Outcome::Success)
}

pub fn sample_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    generate(config, "sample", false)
}

pub fn infill_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    generate(config, "infill", true)
}

pub fn certify_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    let dir = out_dir(config)?;
    let inputs = gather(config, "certify", None)?;
    let target = require_instance(&inputs, "certify")?;
    let r = &inputs.resolved;
    let schedule = r.schedule()?;
    let noise = r.noise()?;
    let model = pick_denoiser(&inputs, "certify")?;
    let uses_oracle = matches!(r.model_kind, Some(ModelKind::Oracle)) || inputs.model.is_none();

    let init = initial_distribution(&noise, r.horizon, r.len, &Prompt::empty())?;
    let p_hat = reverse_propagate_exact(&model, &schedule, &noise, &r.sampler, &init)?;
    let tv = tv_distance(&p_hat, &target)?;
    let redraw = 1.0 - noise.max_stay_prob(r.horizon);
    let lemma1 = lemma1_bound(r.len, redraw, r.horizon)?;
    let budget = theorem1_min_steps(r.len, redraw, r.delta)?;

    let mut pass = tv <= r.delta;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": r.to_json_value(),
        "denoiser": if uses_oracle { "oracle" } else { "model" },
        "horizon": r.horizon,
        "delta": r.delta,
        "tv": tv,
        "lemma1_bound": lemma1,
        "theorem1_steps": budget,
    });
    if uses_oracle {
        let oracle = ExactOracle::new(&target, &schedule, &noise)?;
        let from_pt = reverse_propagate_exact(&oracle, &schedule, &noise, &r.sampler, oracle.marginal(r.horizon))?;
        let reversal_tv = tv_distance(&from_pt, &target)?;
        let sweeps: Vec<usize> = (1..=r.horizon / r.len).collect();
        let envelope = convergence_curve(Method::Ggm, &target, &schedule, &noise, &sweeps, "certify")?;
        let envelope_ok = envelope.within_envelope(ENVELOPE_TOL);
        pass &= reversal_tv <= REVERSAL_TOL && envelope_ok;
        doc["reversal_tv"] = json!(reversal_tv);
        doc["envelope_ok"] = json!(envelope_ok);
        doc["envelope"] = serde_json::to_value(&envelope.points)?;
    }
    doc["pass"] = json!(pass);
    write(&dir.join("certify.json"), &pretty(&doc)?)?;
    Ok(if pass { Outcome::Success } else { Outcome::CertificationFailed })
}

fn curves_csv(resolved: &ResolvedConfig, curves: &[&ConvergenceCurve]) -> Result<String> {
    let mut text = String::new();
    writeln!(text, "# schema_version={SCHEMA_VERSION}").unwrap();
    writeln!(text, "# config={}", serde_json::to_string(resolved)?).unwrap();
    text.push_str(ConvergenceCurve::CSV_HEADER);
    text.push('\n');
    for curve in curves {
        text.push_str(&curve.csv_rows());
    }
    Ok(text)
}

pub fn compare_cmd(config: &ExperimentConfig) -> Result<Outcome> {
    let dir = out_dir(config)?;
    let inputs = gather(config, "compare", Some(InstanceSpec::AntiCorrelated))?;
    let target = require_instance(&inputs, "compare")?;
    let r = &inputs.resolved;
    let schedule = r.schedule()?;
    let noise = r.noise()?;
    let label = match (&r.instance_path, &r.instance) {
        (Some(path), _) => path.display().to_string(),
        (None, Some(spec)) => serde_json::to_string(spec)?,
        (None, None) => "instance".to_string(),
    };
    let ggm = convergence_curve(Method::Ggm, &target, &schedule, &noise, &r.sweeps, &label)?;
    let gibbs = convergence_curve(Method::Gibbs, &target, &schedule, &noise, &r.sweeps, &label)?;
    let within = ggm.within_envelope(ENVELOPE_TOL);
    let budget = theorem1_min_steps(r.len, 1.0 - noise.max_stay_prob(r.horizon), r.delta)?;
    let first_within = ggm.points.iter().find(|p| p.tv <= r.delta).map(|p| p.sweeps);
    let gibbs_there = first_within.and_then(|k| gibbs.points.iter().find(|p| p.sweeps == k)).map(|p| p.tv);

    write(&dir.join("compare.csv"), &curves_csv(r, &[&ggm, &gibbs])?)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": r.to_json_value(),
        "theorem1_steps": budget,
        "theorem1_sweeps": budget.div_ceil(r.len),
        "ggm_within_envelope": within,
        "ggm_first_sweeps_within_delta": first_within,
        "gibbs_tv_at_those_sweeps": gibbs_there,
        "ggm": ggm,
        "gibbs": gibbs,
    });
    write(&dir.join("compare.json"), &pretty(&doc)?)?;
    Ok(if within { Outcome::Success } else { Outcome::CertificationFailed })
}
